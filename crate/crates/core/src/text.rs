//! Small text helpers shared by entity handling and the mock backend.

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Rule-based English singular form of a lowercase noun.
pub fn singularize(word: &str) -> String {
    const KEEP: [&str; 8] = ["glass", "class", "bus", "lens", "chess", "series", "species", "news"];
    if word.len() <= 3 || KEEP.contains(&word) || word.ends_with("ss") || word.ends_with("us") {
        return word.to_string();
    }
    match word {
        "people" => return "person".into(),
        "children" => return "child".into(),
        "mice" => return "mouse".into(),
        "feet" => return "foot".into(),
        "teeth" => return "tooth".into(),
        "knives" => return "knife".into(),
        "leaves" => return "leaf".into(),
        _ => {}
    }
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = word.strip_suffix("ves") {
        return format!("{stem}f");
    }
    for suffix in ["ches", "shes", "xes", "zes", "sses", "oes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    match word.strip_suffix('s') {
        Some(stem) => stem.to_string(),
        None => word.to_string(),
    }
}

/// Rule-based plural of a lowercase singular noun.
pub fn pluralize(word: &str) -> String {
    if let Some(stem) = word.strip_suffix('y') {
        if !stem.ends_with(['a', 'e', 'i', 'o', 'u']) {
            return format!("{stem}ies");
        }
    }
    if ["s", "x", "z", "ch", "sh"].iter().any(|s| word.ends_with(s)) {
        return format!("{word}es");
    }
    format!("{word}s")
}

/// Canonical label of an object name: lowercase singular words with
/// numbering suffixes ("display.001", "Mug_2") removed.
pub fn canonical_label(name: &str) -> String {
    let ws: Vec<String> = words(name)
        .into_iter()
        .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
        .map(|w| singularize(&w))
        .collect();
    ws.join(" ")
}

/// Last word of a canonical label.
pub fn head_noun(label: &str) -> &str {
    label.rsplit(' ').next().unwrap_or(label)
}

pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "with", "is", "are", "it", "its", "in", "on", "at", "to",
    "for", "as", "be", "this", "that", "there", "has", "have", "model", "3d", "by", "from", "which",
    "one", "some", "appears", "shows", "showing",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_forms() {
        for (plural, single) in [
            ("displays", "display"),
            ("seats", "seat"),
            ("handles", "handle"),
            ("boxes", "box"),
            ("shelves", "shelf"),
            ("bodies", "body"),
            ("benches", "bench"),
            ("glass", "glass"),
            ("desk", "desk"),
            ("mugs", "mug"),
            ("chairs", "chair"),
        ] {
            assert_eq!(singularize(plural), single, "{plural}");
        }
    }

    #[test]
    fn plurals_invert_singularize() {
        for w in ["mug", "bottle", "book", "bowl", "display", "box", "bench", "body", "key"] {
            assert_eq!(singularize(&pluralize(w)), w, "{w}");
        }
        assert_eq!(pluralize("body"), "bodies");
        assert_eq!(pluralize("key"), "keys");
    }

    #[test]
    fn labels_drop_numbering() {
        assert_eq!(canonical_label("display.001"), "display");
        assert_eq!(canonical_label("Mug_2"), "mug");
        assert_eq!(canonical_label("Coffee Mugs"), "coffee mug");
        assert_eq!(head_noun("coffee mug"), "mug");
    }
}
