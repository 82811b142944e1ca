//! The guide under `book/`, compiled so that `cargo test` runs its examples.

#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/semirings.md")]
pub mod semirings {}

#[doc = include_str!("../../../book/src/automata.md")]
pub mod automata {}

#[doc = include_str!("../../../book/src/language-models.md")]
pub mod language_models {}

#[doc = include_str!("../../../book/src/channel.md")]
pub mod channel {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/decoding.md")]
pub mod decoding {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[cfg(test)]
mod tests {
    /// Every chapter listed in the table of contents is compiled above.
    #[test]
    fn summary_lists_the_compiled_chapters() {
        let summary = include_str!("../../../book/src/SUMMARY.md");
        let chapters: Vec<&str> = summary
            .lines()
            .filter_map(|l| l.split("](").nth(1))
            .map(|l| l.trim_end_matches(')'))
            .collect();
        let lib = include_str!("lib.rs");
        for c in &chapters {
            assert!(
                lib.contains(&format!("book/src/{c}\")")),
                "{c} is not compiled"
            );
        }
        assert_eq!(chapters.len(), 8);
    }
}
