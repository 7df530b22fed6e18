//! Prompt templates.
//!
//! Rendered byte-for-byte stable: everything outside the substitution slots
//! is a fixed string, so identical inputs always produce identical prompts.

/// Prompt asking for an unbounded keyword list covering a question's topics.
pub fn question_keywords_prompt(question: &str) -> String {
    format!(
        "Instruction: Please select all the topics and keywords covered in the following query \
         and return them as a list with the keywords separated by commas.\n\
         \n\
         Example:\n\
         Question A: When did the people who captured Malakoff come to the region where \
         Philipsburg is located?\n\
         Answer A:\n\
         ['Philipsburg', 'Malakoff']\n\
         \n\
         Question B: When was the first establishment that McDonaldization is named after, \
         open in the country Horndean is located?\n\
         Answer B:\n\
         ['McDonaldization', 'Horndean']\n\
         \n\
         Question:\n\
         {question}\n\
         Answer:"
    )
}

/// Prompt asking for the `n` most representative keywords of a chunk.
pub fn chunk_keywords_prompt(chunk_text: &str, n: usize) -> String {
    format!(
        "Instruction: Please extract the {count} most representative keywords from the \
         following text and return them as a list with the keywords separated by commas.\n\
         \n\
         Example:\n\
         Text: John Cecil, 6th Earl of Exeter (15 May 1674 \u{2013} 24 December 1721), known as \
         Lord Burleigh from 1678 to 1700, was a British peer and Member of Parliament. He was \
         the son of John Cecil, 5th Earl of Exeter, and Anne Cavendish.\n\
         Answer:\n\
         ['John Cecil, 6th Earl of Exeter', 'Lord Burleigh', 'British peer', \
         'Member of Parliament', 'John Cecil, 5th Earl of Exeter']\n\
         \n\
         Text:\n\
         {chunk_text}\n\
         Answer:",
        count = count_word(n),
    )
}

/// QA prompt over retrieved context.
pub fn qa_prompt(question: &str, context: &str) -> String {
    format!(
        "Instruction: Given the following question and contexts, generate a final answer to \
         the question. Please answer in less than 6 words.\n\
         \n\
         Question:\n\
         {question}\n\
         Context:\n\
         {context}\n\
         Answer:"
    )
}

/// QA prompt with no context slot, for the no-retrieval baseline.
pub fn no_retrieval_prompt(question: &str) -> String {
    format!(
        "Instruction: Given the following question, generate an answer to the question. \
         Please answer in less than 6 words.\n\
         \n\
         Question:\n\
         {question}\n\
         Answer:"
    )
}

/// Small counts are spelled out the way the templates phrase them.
fn count_word(n: usize) -> String {
    match n {
        1 => "one".into(),
        2 => "two".into(),
        3 => "three".into(),
        4 => "four".into(),
        5 => "five".into(),
        6 => "six".into(),
        7 => "seven".into(),
        8 => "eight".into(),
        9 => "nine".into(),
        10 => "ten".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qa_prompt_orders_question_then_context() {
        let p = qa_prompt("Q?", "C.");
        let instr = p
            .find("Instruction: Given the following question and contexts")
            .unwrap();
        let q = p.find("Q?").unwrap();
        let c = p.find("C.").unwrap();
        let a = p.find("Answer:").unwrap();
        assert!(instr < q && q < c && c < a);
        assert!(p.contains("Please answer in less than 6 words."));
    }

    #[test]
    fn no_retrieval_prompt_has_no_context_section() {
        let p = no_retrieval_prompt("Q?");
        assert!(!p.contains("Context:"));
        assert!(p.contains("Q?"));
        assert!(p.ends_with("Answer:"));
    }

    #[test]
    fn chunk_prompt_spells_out_five() {
        let p = chunk_keywords_prompt("some text", 5);
        assert!(p.contains("extract the five most representative keywords"));
        assert!(p.contains("John Cecil, 6th Earl of Exeter"));
    }

    #[test]
    fn question_prompt_contains_few_shot_answers() {
        let p = question_keywords_prompt("Who?");
        assert!(p.contains("['Philipsburg', 'Malakoff']"));
        assert!(p.contains("['McDonaldization', 'Horndean']"));
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(qa_prompt("a", "b"), qa_prompt("a", "b"));
        assert_eq!(no_retrieval_prompt("a"), no_retrieval_prompt("a"));
    }
}
