//! Deterministic instruction perturbation generators: character-level typo
//! edits, synonym substitution, appended distractor suffixes, and full
//! paraphrases drawn from a per-task pool. Generators only ever touch the
//! instruction string, never instance inputs or outputs, and every choice
//! comes from a stream keyed by (seed, task, group, index), so a given
//! configuration always produces the same strings.

use crate::rng::Stream;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("no eligible site in instruction {0:?}")]
    NoSite(String),
    #[error("task {task} needs {needed} paraphrases but the pool has {available}")]
    InsufficientParaphrases { task: String, needed: usize, available: usize },
    #[error("could not resolve duplicate instructions for task {task} after {attempts} re-seeds")]
    CollisionExhausted { task: String, attempts: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("lexicon line {line} is malformed: {detail}")]
    BadLexicon { line: usize, detail: String },
}

/// The five evaluation groups; `Clean` passes instructions through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationLevel {
    Clean,
    Character,
    Word,
    Sentence,
    Semantic,
}

impl PerturbationLevel {
    pub const ALL: [PerturbationLevel; 5] = [
        PerturbationLevel::Clean,
        PerturbationLevel::Character,
        PerturbationLevel::Word,
        PerturbationLevel::Sentence,
        PerturbationLevel::Semantic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PerturbationLevel::Clean => "clean",
            PerturbationLevel::Character => "character",
            PerturbationLevel::Word => "word",
            PerturbationLevel::Sentence => "sentence",
            PerturbationLevel::Semantic => "semantic",
        }
    }
}

impl std::str::FromStr for PerturbationLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "clean" => Ok(PerturbationLevel::Clean),
            "character" => Ok(PerturbationLevel::Character),
            "word" => Ok(PerturbationLevel::Word),
            "sentence" => Ok(PerturbationLevel::Sentence),
            "semantic" => Ok(PerturbationLevel::Semantic),
            other => Err(format!("unknown perturbation level {other:?}")),
        }
    }
}

/// Knobs for the generators. Character edits apply exactly one edit to each
/// selected word; the sentence suffix length is fixed at 10.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub seed: u64,
    pub char_fraction: f64,
    pub word_max_substitutions: usize,
}

pub const SENTENCE_SUFFIX_LEN: usize = 10;

impl PerturbationSpec {
    pub fn new(seed: u64) -> Self {
        PerturbationSpec { seed, char_fraction: 0.25, word_max_substitutions: 2 }
    }

    pub fn validate(&self) -> Result<(), PerturbError> {
        if !(self.char_fraction > 0.0 && self.char_fraction <= 1.0) {
            return Err(PerturbError::BadParam(format!(
                "char_fraction must be in (0, 1], got {}",
                self.char_fraction
            )));
        }
        if self.word_max_substitutions == 0 {
            return Err(PerturbError::BadParam("word_max_substitutions must be positive".into()));
        }
        Ok(())
    }
}

/// A generated variant of one instruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedInstruction {
    pub original: String,
    pub perturbed: String,
    pub level: PerturbationLevel,
    pub seed: u64,
    /// Set when the generator provably had no applicable site and returned
    /// the instruction unchanged (word level with zero lexicon hits).
    pub no_site: bool,
}

/// Synonym lexicon: lowercase word to its substitutes.
pub type Lexicon = BTreeMap<String, Vec<String>>;

/// Parses `word<TAB>synonym1,synonym2,...` lines. Blank lines and `#`
/// comments are skipped; synonyms must be single tokens.
pub fn parse_lexicon(text: &str) -> Result<Lexicon, PerturbError> {
    let mut lexicon = Lexicon::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (word, rest) = trimmed.split_once('\t').ok_or(PerturbError::BadLexicon {
            line: line_no,
            detail: "expected word<TAB>synonyms".into(),
        })?;
        let synonyms: Vec<String> = rest.split(',').map(|s| s.trim().to_string()).collect();
        if synonyms.is_empty() || synonyms.iter().any(|s| s.is_empty()) {
            return Err(PerturbError::BadLexicon {
                line: line_no,
                detail: "empty synonym".into(),
            });
        }
        if let Some(bad) = synonyms.iter().find(|s| s.contains(char::is_whitespace)) {
            return Err(PerturbError::BadLexicon {
                line: line_no,
                detail: format!("synonym {bad:?} contains whitespace"),
            });
        }
        lexicon.insert(word.trim().to_lowercase(), synonyms);
    }
    Ok(lexicon)
}

/// Per-task paraphrase pool for the semantic level.
pub type ParaphrasePool = BTreeMap<String, Vec<String>>;

// ── Character level ─────────────────────────────────────────────────────

fn is_placeholder(word: &str) -> bool {
    word.contains('{') || word.contains('}')
}

pub(crate) fn swap_adjacent(chars: &mut [char], pos: usize) {
    chars.swap(pos, pos + 1);
}

const LOWERCASE: [char; 26] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
    's', 't', 'u', 'v', 'w', 'x', 'y', 'z',
];

fn substitute_at(chars: &mut [char], pos: usize, rng: &mut Stream) {
    let old = chars[pos];
    let mut pick = LOWERCASE[rng.below(25)];
    if pick >= old && old.is_ascii_lowercase() {
        // shift past the original letter so the substitute always differs
        let idx = LOWERCASE.iter().position(|&c| c == pick).unwrap();
        pick = LOWERCASE[(idx + 1) % 26];
        if pick == old {
            pick = LOWERCASE[(idx + 2) % 26];
        }
    }
    chars[pos] = pick;
}

/// Applies exactly one typo-style edit to a word; the result always differs
/// from the input.
fn edit_word(word: &str, rng: &mut Stream) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let kind = rng.below(4);
    match kind {
        0 => {
            // adjacent swap at a position where the characters differ
            let sites: Vec<usize> =
                (0..chars.len() - 1).filter(|&i| chars[i] != chars[i + 1]).collect();
            if sites.is_empty() {
                let pos = rng.below(chars.len());
                substitute_at(&mut chars, pos, rng);
            } else {
                swap_adjacent(&mut chars, sites[rng.below(sites.len())]);
            }
        }
        1 => {
            chars.remove(rng.below(chars.len()));
        }
        2 => {
            let pos = rng.below(chars.len() + 1);
            chars.insert(pos, LOWERCASE[rng.below(26)]);
        }
        _ => {
            let pos = rng.below(chars.len());
            substitute_at(&mut chars, pos, rng);
        }
    }
    chars.into_iter().collect()
}

/// Typo-style perturbation: one edit (swap / delete / insert / substitute)
/// to each of `ceil(fraction × word count)` selected words. Words shorter
/// than 3 characters and placeholder tokens are exempt. Word count is
/// preserved.
pub fn perturb_character(
    instruction: &str,
    spec: &PerturbationSpec,
    rng: &mut Stream,
) -> Result<PerturbedInstruction, PerturbError> {
    spec.validate()?;
    let mut words: Vec<String> = instruction.split(' ').map(str::to_string).collect();
    let eligible: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.chars().count() >= 3 && !is_placeholder(w))
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(PerturbError::NoSite(instruction.to_string()));
    }
    let k = ((spec.char_fraction * words.len() as f64).ceil() as usize)
        .clamp(1, eligible.len());
    let mut chosen: Vec<usize> =
        rng.sample_indices(eligible.len(), k).into_iter().map(|i| eligible[i]).collect();
    chosen.sort_unstable();
    for i in chosen {
        words[i] = edit_word(&words[i], rng);
    }
    Ok(PerturbedInstruction {
        original: instruction.to_string(),
        perturbed: words.join(" "),
        level: PerturbationLevel::Character,
        seed: spec.seed,
        no_site: false,
    })
}

// ── Word level ──────────────────────────────────────────────────────────

const TRAILING_PUNCT: [char; 6] = ['.', ',', '!', '?', ';', ':'];

fn split_trailing_punct(word: &str) -> (&str, &str) {
    let core_end = word.trim_end_matches(TRAILING_PUNCT).len();
    word.split_at(core_end)
}

fn match_leading_case(original: &str, replacement: &str) -> String {
    let starts_upper = original.chars().next().is_some_and(|c| c.is_uppercase());
    if starts_upper {
        let mut cs = replacement.chars();
        match cs.next() {
            Some(first) => first.to_uppercase().collect::<String>() + cs.as_str(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

/// Synonym substitution: scans words left to right, replacing up to
/// `word_max_substitutions` lexicon hits with a uniformly chosen synonym,
/// preserving leading capitalization and trailing punctuation. Zero hits is
/// not an error; the result is returned unchanged with `no_site` set.
pub fn perturb_word(
    instruction: &str,
    spec: &PerturbationSpec,
    lexicon: &Lexicon,
    rng: &mut Stream,
) -> Result<PerturbedInstruction, PerturbError> {
    spec.validate()?;
    if lexicon.is_empty() {
        return Err(PerturbError::BadParam("empty synonym lexicon".into()));
    }
    let mut words: Vec<String> = instruction.split(' ').map(str::to_string).collect();
    let mut substituted = 0usize;
    for w in words.iter_mut() {
        if substituted == spec.word_max_substitutions {
            break;
        }
        let (core, punct) = split_trailing_punct(w);
        if core.is_empty() || is_placeholder(core) {
            continue;
        }
        if let Some(synonyms) = lexicon.get(&core.to_lowercase()) {
            let pick = &synonyms[rng.below(synonyms.len())];
            *w = match_leading_case(core, pick) + punct;
            substituted += 1;
        }
    }
    Ok(PerturbedInstruction {
        original: instruction.to_string(),
        perturbed: words.join(" "),
        level: PerturbationLevel::Word,
        seed: spec.seed,
        no_site: substituted == 0,
    })
}

// ── Sentence level ──────────────────────────────────────────────────────

const SUFFIX_ALPHABET: &[u8; 62] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// Appends a space and a 10-character alphanumeric distractor.
pub fn perturb_sentence(
    instruction: &str,
    spec: &PerturbationSpec,
    rng: &mut Stream,
) -> PerturbedInstruction {
    let mut out = String::with_capacity(instruction.len() + 1 + SENTENCE_SUFFIX_LEN);
    out.push_str(instruction);
    out.push(' ');
    for _ in 0..SENTENCE_SUFFIX_LEN {
        out.push(SUFFIX_ALPHABET[rng.below(62)] as char);
    }
    PerturbedInstruction {
        original: instruction.to_string(),
        perturbed: out,
        level: PerturbationLevel::Sentence,
        seed: spec.seed,
        no_site: false,
    }
}

// ── Semantic level ──────────────────────────────────────────────────────

/// Uniformly draws one paraphrase of the task's instruction from the pool.
pub fn perturb_semantic(
    task: &str,
    pool: &ParaphrasePool,
    rng: &mut Stream,
) -> Result<String, PerturbError> {
    let paraphrases = pool.get(task).filter(|p| !p.is_empty()).ok_or_else(|| {
        PerturbError::InsufficientParaphrases { task: task.to_string(), needed: 1, available: 0 }
    })?;
    Ok(paraphrases[rng.below(paraphrases.len())].clone())
}

// ── Group construction ──────────────────────────────────────────────────

pub const GROUP_SIZE: usize = 6;
const MAX_RESEED_ATTEMPTS: usize = 3;

/// The five instruction groups for one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstructionGroups {
    pub task: String,
    pub groups: BTreeMap<PerturbationLevel, Vec<String>>,
    /// Duplicate strings that could not be separated but are legitimate
    /// (word-level entries with no lexicon site).
    pub flagged_duplicates: Vec<String>,
}

fn stream_for(seed: u64, task: &str, level: PerturbationLevel, index: usize, attempt: usize) -> Stream {
    Stream::from_seed(seed)
        .derive(task)
        .derive(level.name())
        .derive_u64(index as u64)
        .derive_u64(attempt as u64)
}

fn build_once(
    task: &str,
    clean: &[String],
    spec: &PerturbationSpec,
    lexicon: &Lexicon,
    pool: &ParaphrasePool,
    attempt: usize,
) -> Result<(BTreeMap<PerturbationLevel, Vec<String>>, Vec<usize>), PerturbError> {
    let seed = spec.seed;
    let mut groups = BTreeMap::new();
    groups.insert(PerturbationLevel::Clean, clean.to_vec());

    let mut no_site_flags = Vec::new();

    let mut character = Vec::with_capacity(GROUP_SIZE);
    for (i, instr) in clean.iter().enumerate() {
        let mut rng = stream_for(seed, task, PerturbationLevel::Character, i, attempt);
        character.push(perturb_character(instr, spec, &mut rng)?.perturbed);
    }
    groups.insert(PerturbationLevel::Character, character);

    let mut word = Vec::with_capacity(GROUP_SIZE);
    for (i, instr) in clean.iter().enumerate() {
        let mut rng = stream_for(seed, task, PerturbationLevel::Word, i, attempt);
        let p = perturb_word(instr, spec, lexicon, &mut rng)?;
        if p.no_site {
            no_site_flags.push(i);
        }
        word.push(p.perturbed);
    }
    groups.insert(PerturbationLevel::Word, word);

    let mut sentence = Vec::with_capacity(GROUP_SIZE);
    for (i, instr) in clean.iter().enumerate() {
        let mut rng = stream_for(seed, task, PerturbationLevel::Sentence, i, attempt);
        sentence.push(perturb_sentence(instr, spec, &mut rng).perturbed);
    }
    groups.insert(PerturbationLevel::Sentence, sentence);

    let available = pool.get(task).map_or(0, Vec::len);
    if available < GROUP_SIZE {
        return Err(PerturbError::InsufficientParaphrases {
            task: task.to_string(),
            needed: GROUP_SIZE,
            available,
        });
    }
    let paraphrases = &pool[task];
    let mut rng = stream_for(seed, task, PerturbationLevel::Semantic, 0, attempt);
    let semantic: Vec<String> = rng
        .sample_indices(paraphrases.len(), GROUP_SIZE)
        .into_iter()
        .map(|i| paraphrases[i].clone())
        .collect();
    groups.insert(PerturbationLevel::Semantic, semantic);

    Ok((groups, no_site_flags))
}

fn duplicates(groups: &BTreeMap<PerturbationLevel, Vec<String>>) -> Vec<String> {
    let mut seen = BTreeMap::new();
    let mut dups = Vec::new();
    for (level, members) in groups {
        for (i, s) in members.iter().enumerate() {
            if let Some(prev) = seen.insert(s.clone(), (*level, i)) {
                let _ = prev;
                dups.push(s.clone());
            }
        }
    }
    dups
}

/// Builds the clean group plus the four perturbed groups, each of size 6,
/// from six clean instructions. Perturbed groups derive element-wise from
/// the clean six; the semantic group is drawn from the paraphrase pool
/// without replacement. Duplicate strings trigger a re-seeded rebuild (up
/// to 3 attempts); duplicates explained by word-level no-site passthrough
/// are flagged instead.
pub fn build_instruction_groups(
    task: &str,
    clean: &[String],
    spec: &PerturbationSpec,
    lexicon: &Lexicon,
    pool: &ParaphrasePool,
) -> Result<InstructionGroups, PerturbError> {
    spec.validate()?;
    if clean.len() != GROUP_SIZE {
        return Err(PerturbError::BadParam(format!(
            "expected exactly {GROUP_SIZE} clean instructions, got {}",
            clean.len()
        )));
    }
    let mut last_dups = Vec::new();
    for attempt in 0..MAX_RESEED_ATTEMPTS {
        let (groups, no_site_flags) = build_once(task, clean, spec, lexicon, pool, attempt)?;
        let dups = duplicates(&groups);
        if dups.is_empty() {
            return Ok(InstructionGroups {
                task: task.to_string(),
                groups,
                flagged_duplicates: Vec::new(),
            });
        }
        // A word-level passthrough duplicates its clean source no matter the
        // seed; flag those rather than erroring.
        let word_group = &groups[&PerturbationLevel::Word];
        let explained: Vec<&String> = dups
            .iter()
            .filter(|d| {
                no_site_flags.iter().any(|&i| &word_group[i] == *d)
            })
            .collect();
        if explained.len() == dups.len() {
            return Ok(InstructionGroups {
                task: task.to_string(),
                groups,
                flagged_duplicates: dups,
            });
        }
        last_dups = dups;
    }
    let _ = last_dups;
    Err(PerturbError::CollisionExhausted { task: task.to_string(), attempts: MAX_RESEED_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> PerturbationSpec {
        PerturbationSpec::new(seed)
    }

    #[test]
    fn adjacent_swap_matches_expected_edit() {
        let mut chars: Vec<char> = "Classify".chars().collect();
        swap_adjacent(&mut chars, 1);
        assert_eq!(chars.into_iter().collect::<String>(), "Calssify");
    }

    #[test]
    fn delete_edit_shrinks_word() {
        let mut chars: Vec<char> = "the".chars().collect();
        chars.remove(0);
        assert_eq!(chars.into_iter().collect::<String>(), "he");
    }

    #[test]
    fn character_perturbation_preserves_word_count_and_differs() {
        let s = spec(11);
        for seed in 0..200 {
            let mut rng = Stream::from_seed(seed);
            let p = perturb_character("Classify the sentence as acceptable or not.", &s, &mut rng)
                .unwrap();
            assert_eq!(
                p.perturbed.split(' ').count(),
                p.original.split(' ').count(),
                "word count changed: {:?}",
                p.perturbed
            );
            assert_ne!(p.perturbed, p.original);
        }
    }

    #[test]
    fn character_perturbation_needs_an_eligible_word() {
        let s = spec(1);
        let mut rng = Stream::from_seed(0);
        assert!(matches!(
            perturb_character("a is b", &s, &mut rng),
            Err(PerturbError::NoSite(_))
        ));
    }

    #[test]
    fn character_unselected_words_untouched() {
        let s = PerturbationSpec { seed: 3, char_fraction: 0.25, word_max_substitutions: 2 };
        for seed in 0..100 {
            let mut rng = Stream::from_seed(seed);
            let original = "alpha beta gamma delta epsilon zeta eta theta";
            let p = perturb_character(original, &s, &mut rng).unwrap();
            let before: Vec<&str> = original.split(' ').collect();
            let after: Vec<&str> = p.perturbed.split(' ').collect();
            let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
            assert_eq!(changed, 2, "ceil(0.25 × 8) = 2 words must change");
        }
    }

    #[test]
    fn word_substitution_preserves_case_and_punctuation() {
        let lexicon = parse_lexicon("classify\tcategorize\nsentence\tphrase").unwrap();
        let s = spec(5);
        let mut rng = Stream::from_seed(0);
        let p = perturb_word("Classify the sentence.", &s, &lexicon, &mut rng).unwrap();
        assert_eq!(p.perturbed, "Categorize the phrase.");
        assert!(!p.no_site);
    }

    #[test]
    fn word_substitution_caps_at_max() {
        let lexicon = parse_lexicon("aa\tbb\ncc\tdd\nee\tff").unwrap();
        let s = PerturbationSpec { seed: 0, char_fraction: 0.25, word_max_substitutions: 2 };
        let mut rng = Stream::from_seed(0);
        let p = perturb_word("aa cc ee", &s, &lexicon, &mut rng).unwrap();
        assert_eq!(p.perturbed, "bb dd ee");
    }

    #[test]
    fn word_no_hits_is_flagged_not_error() {
        let lexicon = parse_lexicon("unrelated\tword").unwrap();
        let s = spec(5);
        let mut rng = Stream::from_seed(0);
        let p = perturb_word("Classify the sentence.", &s, &lexicon, &mut rng).unwrap();
        assert_eq!(p.perturbed, p.original);
        assert!(p.no_site);
    }

    #[test]
    fn word_count_always_preserved_by_substitution() {
        let lexicon =
            parse_lexicon("check\tinspect,examine\ntext\tpassage\nanswer\treply,respond").unwrap();
        let s = spec(2);
        for seed in 0..100 {
            let mut rng = Stream::from_seed(seed);
            let original = "Check the text and answer yes or no.";
            let p = perturb_word(original, &s, &lexicon, &mut rng).unwrap();
            assert_eq!(p.perturbed.split(' ').count(), original.split(' ').count());
        }
    }

    #[test]
    fn sentence_suffix_shape() {
        let s = spec(9);
        for seed in 0..1000 {
            let mut rng = Stream::from_seed(seed);
            let p = perturb_sentence("Classify the sentence.", &s, &mut rng);
            assert_eq!(p.perturbed.chars().count(), p.original.chars().count() + 11);
            assert!(p.perturbed.starts_with("Classify the sentence. "));
            let suffix = &p.perturbed[p.original.len() + 1..];
            assert_eq!(suffix.len(), 10);
            assert!(suffix.chars().all(|c| c.is_ascii_alphanumeric()));
        }
    }

    #[test]
    fn semantic_draws_from_pool() {
        let mut pool = ParaphrasePool::new();
        pool.insert("t".into(), vec!["Only one paraphrase.".into()]);
        let mut rng = Stream::from_seed(0);
        assert_eq!(perturb_semantic("t", &pool, &mut rng).unwrap(), "Only one paraphrase.");
        assert!(matches!(
            perturb_semantic("missing", &pool, &mut rng),
            Err(PerturbError::InsufficientParaphrases { .. })
        ));
    }

    fn test_fixture() -> (Vec<String>, Lexicon, ParaphrasePool) {
        let clean: Vec<String> = (0..6)
            .map(|i| format!("Decide whether example number {i} mentions the color blue."))
            .collect();
        let lexicon = parse_lexicon(
            "decide\tjudge,determine\nmentions\tcites,references\ncolor\thue,shade",
        )
        .unwrap();
        let mut pool = ParaphrasePool::new();
        pool.insert(
            "task".into(),
            (0..8).map(|i| format!("Paraphrase variant {i}: is blue present?")).collect(),
        );
        (clean, lexicon, pool)
    }

    #[test]
    fn groups_have_five_levels_of_six() {
        let (clean, lexicon, pool) = test_fixture();
        let g = build_instruction_groups("task", &clean, &spec(13), &lexicon, &pool).unwrap();
        assert_eq!(g.groups.len(), 5);
        for members in g.groups.values() {
            assert_eq!(members.len(), 6);
        }
        assert_eq!(g.groups[&PerturbationLevel::Clean], clean);
        for i in 0..6 {
            assert_ne!(g.groups[&PerturbationLevel::Character][i], clean[i]);
            assert_ne!(g.groups[&PerturbationLevel::Sentence][i], clean[i]);
        }
        assert!(g.flagged_duplicates.is_empty());
    }

    #[test]
    fn groups_deterministic() {
        let (clean, lexicon, pool) = test_fixture();
        let a = build_instruction_groups("task", &clean, &spec(13), &lexicon, &pool).unwrap();
        let b = build_instruction_groups("task", &clean, &spec(13), &lexicon, &pool).unwrap();
        assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn groups_require_six_clean() {
        let (clean, lexicon, pool) = test_fixture();
        let err =
            build_instruction_groups("task", &clean[..5], &spec(1), &lexicon, &pool).unwrap_err();
        assert!(matches!(err, PerturbError::BadParam(_)));
    }

    #[test]
    fn groups_need_enough_paraphrases() {
        let (clean, lexicon, mut pool) = test_fixture();
        pool.insert("task".into(), vec!["too few".into()]);
        let err =
            build_instruction_groups("task", &clean, &spec(1), &lexicon, &pool).unwrap_err();
        assert!(matches!(err, PerturbError::InsufficientParaphrases { needed: 6, .. }));
    }

    #[test]
    fn lexicon_rejects_multiword_synonyms() {
        assert!(matches!(
            parse_lexicon("word\ttwo tokens"),
            Err(PerturbError::BadLexicon { .. })
        ));
    }
}
