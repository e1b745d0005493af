//! Byte-level tokenizer with instruction / input / output segment spans.
//!
//! Bytes map to ids 0–255; ids 256–259 are BOS, EOS, PAD and SEP. Training
//! sequences are laid out `BOS instruction SEP input SEP output EOS`. When a
//! sequence exceeds the context length, bytes are dropped from the left of
//! the input region first, then from the left of the instruction; the output
//! region is never truncated.

use super::ModelError;
use std::ops::Range;

pub const VOCAB_SIZE: usize = 260;
pub const BOS: usize = 256;
pub const EOS: usize = 257;
pub const PAD: usize = 258;
pub const SEP: usize = 259;

/// Token ids plus the spans of the three text regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Instruction byte positions (excludes BOS/SEP).
    pub instruction_span: Range<usize>,
    /// Input byte positions.
    pub input_span: Range<usize>,
    /// Output positions: the output bytes plus the trailing EOS. Empty for
    /// prompt sequences.
    pub output_span: Range<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of supervised positions (output bytes + EOS).
    pub fn output_len(&self) -> usize {
        self.output_span.len()
    }
}

/// Plain text to `BOS + bytes`. Total function; never truncates.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut ids = Vec::with_capacity(text.len() + 1);
    ids.push(BOS);
    ids.extend(text.bytes().map(usize::from));
    let n = ids.len();
    TokenSequence {
        ids,
        instruction_span: 1..n,
        input_span: n..n,
        output_span: n..n,
    }
}

/// Byte ids back to text; special ids are dropped.
pub fn detokenize(ids: &[usize]) -> String {
    let bytes: Vec<u8> = ids.iter().filter(|&&id| id < 256).map(|&id| id as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

fn truncate_left(region: &mut Vec<u8>, overflow: &mut usize) {
    let cut = (*overflow).min(region.len());
    region.drain(..cut);
    *overflow -= cut;
}

fn assemble(
    instruction: &str,
    input: &str,
    output: Option<&str>,
    context_len: usize,
) -> Result<TokenSequence, ModelError> {
    let mut instr: Vec<u8> = instruction.bytes().collect();
    let mut inp: Vec<u8> = input.bytes().collect();
    let out: Vec<u8> = output.map(|o| o.bytes().collect()).unwrap_or_default();

    // BOS + instr + SEP + inp + SEP (+ out + EOS)
    let fixed = 3 + if output.is_some() { out.len() + 1 } else { 0 };
    let total = fixed + instr.len() + inp.len();
    if total > context_len {
        let mut overflow = total - context_len;
        truncate_left(&mut inp, &mut overflow);
        truncate_left(&mut instr, &mut overflow);
        if overflow > 0 {
            return Err(ModelError::SequenceTooLong {
                needed: fixed,
                context_len,
            });
        }
    }

    let mut ids = Vec::with_capacity(context_len.min(total));
    ids.push(BOS);
    let instr_start = ids.len();
    ids.extend(instr.iter().map(|&b| usize::from(b)));
    let instr_span = instr_start..ids.len();
    ids.push(SEP);
    let input_start = ids.len();
    ids.extend(inp.iter().map(|&b| usize::from(b)));
    let input_span = input_start..ids.len();
    ids.push(SEP);
    let output_span = if output.is_some() {
        let out_start = ids.len();
        ids.extend(out.iter().map(|&b| usize::from(b)));
        ids.push(EOS);
        out_start..ids.len()
    } else {
        let n = ids.len();
        n..n
    };
    debug_assert!(ids.len() <= context_len);
    Ok(TokenSequence {
        ids,
        instruction_span: instr_span,
        input_span,
        output_span,
    })
}

/// Training layout `BOS I SEP x SEP y EOS`. Errors if `output` is empty or
/// if the output alone cannot fit in the context.
pub fn render_training_sequence(
    instruction: &str,
    input: &str,
    output: &str,
    context_len: usize,
) -> Result<TokenSequence, ModelError> {
    if output.is_empty() {
        return Err(ModelError::EmptyOutput);
    }
    assemble(instruction, input, Some(output), context_len)
}

/// Prompt layout `BOS I SEP x SEP`, ready for generation.
pub fn render_prompt_sequence(
    instruction: &str,
    input: &str,
    context_len: usize,
) -> Result<TokenSequence, ModelError> {
    assemble(instruction, input, None, context_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_is_bos_plus_bytes() {
        assert_eq!(tokenize("ab").ids, vec![BOS, 97, 98]);
        assert_eq!(tokenize("").ids, vec![BOS]);
    }

    #[test]
    fn training_layout_and_spans() {
        let seq = render_training_sequence("do", "x", "yes", 64).unwrap();
        assert_eq!(
            seq.ids,
            vec![BOS, 100, 111, SEP, 120, SEP, 121, 101, 115, EOS]
        );
        assert_eq!(seq.instruction_span, 1..3);
        assert_eq!(seq.input_span, 4..5);
        assert_eq!(seq.output_span, 6..10);
        assert_eq!(seq.output_len(), 4);
    }

    #[test]
    fn truncation_eats_input_before_instruction_never_output() {
        // fixed = BOS + 2 SEP + output(2) + EOS = 6; instr 4 + input 10 = 20 total
        let seq = render_training_sequence("abcd", "0123456789", "no", 14).unwrap();
        // overflow 6: input loses its left 6 bytes
        assert_eq!(detokenize(&seq.ids[seq.input_span.clone()]), "6789");
        assert_eq!(detokenize(&seq.ids[seq.instruction_span.clone()]), "abcd");
        assert_eq!(detokenize(&seq.ids[seq.output_span.clone()]), "no");
        assert_eq!(seq.len(), 14);

        // Tighter: input fully dropped, instruction loses 2 from the left.
        let seq = render_training_sequence("abcd", "0123456789", "no", 8).unwrap();
        assert_eq!(detokenize(&seq.ids[seq.input_span.clone()]), "");
        assert_eq!(detokenize(&seq.ids[seq.instruction_span.clone()]), "cd");
        assert_eq!(detokenize(&seq.ids[seq.output_span.clone()]), "no");
    }

    #[test]
    fn output_never_fits_is_an_error() {
        let err = render_training_sequence("i", "x", "longoutput", 8).unwrap_err();
        assert!(matches!(err, ModelError::SequenceTooLong { .. }));
    }

    #[test]
    fn empty_output_rejected() {
        assert!(matches!(
            render_training_sequence("i", "x", "", 64),
            Err(ModelError::EmptyOutput)
        ));
    }

    proptest! {
        #[test]
        fn detokenize_roundtrip(s in "\\PC{0,40}") {
            let seq = tokenize(&s);
            prop_assert_eq!(detokenize(&seq.ids), s);
        }

        #[test]
        fn truncated_sequences_fit_context(
            i in "[a-z]{0,60}", x in "[a-z]{0,60}", y in "[a-z]{1,5}",
            ctx in 12usize..80,
        ) {
            let seq = render_training_sequence(&i, &x, &y, ctx).unwrap();
            prop_assert!(seq.len() <= ctx);
            prop_assert_eq!(detokenize(&seq.ids[seq.output_span.clone()]), y);
        }
    }
}
