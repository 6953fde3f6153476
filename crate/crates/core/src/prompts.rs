//! Prompt templates sent to the text and multimodal generators.
//!
//! The multimodal answering template is fixed verbatim; the others are this
//! engine's own wording. The mock backend recognizes each template by its
//! leading sentence.

pub const ENTITY_HEADER: &str = "Extract the key entities of the visual question below.";
pub const CLASSIFY_HEADER: &str = "Classify the visual question below.";
pub const COMPARE_HEADER: &str = "Summarize the similarities and differences between the answers below.";
pub const MULTIMODAL_PREFIX: &str = "Given different views of a 3D model. Answer the question in one sentence. Question: ";
pub const MULTIMODAL_SUFFIX: &str = " The answer should be concise";
pub const QUESTION_LINE: &str = "Question: ";

pub fn entity_extraction(question: &str) -> String {
    format!(
        "{ENTITY_HEADER} Reply with the singular nouns separated by commas, or NONE if there are none.\n{QUESTION_LINE}{question}"
    )
}

pub fn classification(question: &str) -> String {
    format!(
        "{CLASSIFY_HEADER} Reply Counting if it asks for a number of objects, otherwise reply Other.\n{QUESTION_LINE}{question}"
    )
}

/// `${VQ}` substituted verbatim.
pub fn multimodal_answer(question: &str) -> String {
    format!("{MULTIMODAL_PREFIX}{question}{MULTIMODAL_SUFFIX}")
}

pub fn comparison(answers: &[String]) -> String {
    let mut out = format!(
        "{COMPARE_HEADER} Each answer describes a different 3D model. Refer to a model only by its index name.\nReply with exactly two lines starting with \"Similarities:\" and \"Differences:\"."
    );
    for (i, a) in answers.iter().enumerate() {
        out.push_str(&format!("\nModel {}: {}", i + 1, a));
    }
    out
}

/// Question embedded in an extraction or classification prompt.
pub fn question_of(prompt: &str) -> Option<&str> {
    prompt.rsplit_once(&format!("\n{QUESTION_LINE}")).map(|(_, q)| q)
}

/// Question embedded in the multimodal template.
pub fn multimodal_question_of(prompt: &str) -> Option<&str> {
    prompt.strip_prefix(MULTIMODAL_PREFIX)?.strip_suffix(MULTIMODAL_SUFFIX)
}

/// The numbered answers of a comparison prompt.
pub fn comparison_answers(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|l| {
            let rest = l.strip_prefix("Model ")?;
            let (idx, text) = rest.split_once(": ")?;
            idx.parse::<usize>().ok().map(|_| text.to_string())
        })
        .collect()
}
