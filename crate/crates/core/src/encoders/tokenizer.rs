//! Byte-pair-encoding tokenizer compatible with the CLIP text tower.
//!
//! Vocabulary layout: 256 byte symbols, the same 256 with an end-of-word
//! suffix, one entry per merge rule, then the start/end markers.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::RwLock;

use flate2::read::GzDecoder;
use regex::Regex;

use super::EncoderError;

pub const CONTEXT_LENGTH: usize = 77;
pub const PAD_ID: u32 = 0;

const START_OF_TEXT: &str = "<|startoftext|>";
const END_OF_TEXT: &str = "<|endoftext|>";
const DEFAULT_MERGES: usize = 49152 - 256 - 2;

/// Fixed-length id sequence fed to the text encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
    end_position: usize,
}

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Index of the end-of-text marker.
    pub fn end_position(&self) -> usize {
        self.end_position
    }
}

pub struct BpeTokenizer {
    encoder: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    pattern: Regex,
    sot: u32,
    eot: u32,
    context_length: usize,
    cache: RwLock<HashMap<String, Vec<u32>>>,
}

impl std::fmt::Debug for BpeTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BpeTokenizer")
            .field("vocab_size", &self.vocab_size())
            .field("context_length", &self.context_length)
            .finish()
    }
}

/// The reversible byte → printable-char table used by GPT-2 style BPE.
///
/// Returns the table indexed by byte and the byte order in which the symbols
/// enter the vocabulary (printable bytes first, then the remapped ones).
fn bytes_to_unicode() -> ([char; 256], Vec<u8>) {
    let mut table = ['\0'; 256];
    let mut order: Vec<u8> = (b'!'..=b'~').chain(0xA1..=0xAC).chain(0xAE..=0xFF).collect();
    for &b in &order {
        table[b as usize] = char::from(b);
    }
    let mut n = 0u32;
    for b in 0..=255u8 {
        if table[b as usize] == '\0' {
            table[b as usize] = char::from_u32(256 + n).expect("valid scalar");
            order.push(b);
            n += 1;
        }
    }
    (table, order)
}

impl BpeTokenizer {
    /// Loads a merges file; `.gz` paths are decompressed transparently.
    pub fn from_file(path: &Path, context_length: usize) -> Result<Self, EncoderError> {
        let file = std::fs::File::open(path)
            .map_err(|e| EncoderError::Asset(format!("{}: {e}", path.display())))?;
        let reader: Box<dyn Read> = if path.extension().is_some_and(|ext| ext == "gz") {
            Box::new(GzDecoder::new(file))
        } else {
            Box::new(file)
        };
        Self::from_reader(BufReader::new(reader), context_length)
    }

    pub fn from_reader(reader: impl BufRead, context_length: usize) -> Result<Self, EncoderError> {
        if context_length < 2 {
            return Err(EncoderError::Asset("context length must be at least 2".into()));
        }
        let (byte_encoder, byte_order) = bytes_to_unicode();
        let mut merges = Vec::with_capacity(DEFAULT_MERGES);
        // first line is a version header
        for line in reader.lines().skip(1).take(DEFAULT_MERGES) {
            let line = line.map_err(|e| EncoderError::Asset(format!("merges file: {e}")))?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some(a), Some(b)) => merges.push((a.to_string(), b.to_string())),
                _ => return Err(EncoderError::Asset(format!("malformed merge rule `{line}`"))),
            }
        }

        let symbols: Vec<char> = byte_order.iter().map(|&b| byte_encoder[b as usize]).collect();
        let mut vocab: Vec<String> = symbols.iter().map(|c| c.to_string()).collect();
        vocab.extend(symbols.iter().map(|c| format!("{c}</w>")));
        vocab.extend(merges.iter().map(|(a, b)| format!("{a}{b}")));
        vocab.push(START_OF_TEXT.to_string());
        vocab.push(END_OF_TEXT.to_string());
        let encoder: HashMap<String, u32> =
            vocab.into_iter().enumerate().map(|(i, s)| (s, i as u32)).collect();
        let ranks = merges.into_iter().enumerate().map(|(i, m)| (m, i)).collect();

        let pattern = Regex::new(
            r"(?i)<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+",
        )
        .expect("static pattern");
        let sot = encoder[START_OF_TEXT];
        let eot = encoder[END_OF_TEXT];
        Ok(BpeTokenizer {
            encoder,
            ranks,
            byte_encoder,
            pattern,
            sot,
            eot,
            context_length,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.encoder.len()
    }

    pub fn start_of_text(&self) -> u32 {
        self.sot
    }

    pub fn end_of_text(&self) -> u32 {
        self.eot
    }

    pub fn context_length(&self) -> usize {
        self.context_length
    }

    fn bpe(&self, token: &str) -> Vec<u32> {
        if let Some(hit) = self.cache.read().expect("tokenizer cache").get(token) {
            return hit.clone();
        }
        let mut word: Vec<String> = token.chars().map(|c| c.to_string()).collect();
        if let Some(last) = word.last_mut() {
            last.push_str("</w>");
        }
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|r| (*r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            let Some((first, second)) = best else { break };
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut word[i]));
                    i += 1;
                }
            }
            word = merged;
        }
        let ids: Vec<u32> = word.iter().map(|piece| self.encoder[piece]).collect();
        self.cache
            .write()
            .expect("tokenizer cache")
            .insert(token.to_string(), ids.clone());
        ids
    }

    /// BPE ids for `text` without start/end markers.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let text = clean_text(text).to_lowercase();
        let mut out = Vec::new();
        for m in self.pattern.find_iter(&text) {
            let piece = m.as_str();
            if piece == START_OF_TEXT {
                out.push(self.sot);
                continue;
            }
            if piece == END_OF_TEXT {
                out.push(self.eot);
                continue;
            }
            let mapped: String = piece.bytes().map(|b| self.byte_encoder[b as usize]).collect();
            out.extend(self.bpe(&mapped));
        }
        out
    }

    /// Wraps with markers, truncates keeping the end marker, pads with zeros.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::with_capacity(self.context_length);
        ids.push(self.sot);
        ids.extend(self.encode(text));
        ids.push(self.eot);
        if ids.len() > self.context_length {
            ids.truncate(self.context_length);
            ids[self.context_length - 1] = self.eot;
        }
        let end_position = ids.len() - 1;
        ids.resize(self.context_length, PAD_ID);
        TokenSequence { ids, end_position }
    }
}

/// Whitespace collapsing plus the small subset of text repair the reference
/// tokenizer applies (HTML entities, typographic quotes).
fn clean_text(text: &str) -> String {
    let unescaped = unescape_html(&unescape_html(text));
    let uncurled: String = unescaped
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' => '\'',
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' => '"',
            c => c,
        })
        .collect();
    uncurled.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn unescape_html(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let end = rest[1..].find(';').map(|i| i + 1).filter(|&i| i <= 10);
        let decoded = end.and_then(|end| {
            let entity = &rest[1..end];
            let ch = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ if entity.starts_with("#x") || entity.starts_with("#X") => {
                    u32::from_str_radix(&entity[2..], 16).ok().and_then(char::from_u32)
                }
                _ if entity.starts_with('#') => entity[1..].parse().ok().and_then(char::from_u32),
                _ => None,
            };
            ch.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    // a toy merges file: enough rules to build "lung</w>" and "lungs</w>"
    fn toy() -> BpeTokenizer {
        let merges = "#version: 0.2\nl u\nlu n\nlun g</w>\nlun g\nlung s</w>\n";
        BpeTokenizer::from_reader(Cursor::new(merges), 8).unwrap()
    }

    #[test]
    fn toy_vocab_layout() {
        let t = toy();
        assert_eq!(t.vocab_size(), 512 + 5 + 2);
        assert_eq!(t.start_of_text(), 517);
        assert_eq!(t.end_of_text(), 518);
    }

    #[test]
    fn toy_merges_apply_by_rank() {
        let t = toy();
        // "lung" -> l u n g</w> -> lu n g</w> -> lun g</w> -> lung</w>
        assert_eq!(t.encode("lung"), vec![512 + 2]);
        assert_eq!(t.encode("LUNGS"), vec![512 + 4]);
        // unmerged single byte with end-of-word marker
        let x = t.byte_encoder[b'x' as usize];
        assert_eq!(t.encode("x"), vec![t.encoder[&format!("{x}</w>")]]);
    }

    #[test]
    fn empty_string_is_markers_and_padding() {
        let t = toy();
        let seq = t.tokenize("");
        assert_eq!(seq.ids()[..2], [517, 518]);
        assert!(seq.ids()[2..].iter().all(|&id| id == PAD_ID));
        assert_eq!(seq.len(), 8);
        assert_eq!(seq.end_position(), 1);
    }

    #[test]
    fn truncation_keeps_end_marker() {
        let t = toy();
        let seq = t.tokenize(&"lung ".repeat(50));
        assert_eq!(seq.len(), 8);
        assert_eq!(seq.ids()[0], 517);
        assert_eq!(seq.ids()[7], 518);
        assert_eq!(seq.end_position(), 7);
    }

    #[test]
    fn special_markers_in_text() {
        let t = toy();
        assert_eq!(t.encode("<|endoftext|>"), vec![518]);
    }

    #[test]
    fn clean_text_rules() {
        assert_eq!(clean_text("  a \n\t b  "), "a b");
        assert_eq!(clean_text("it\u{2019}s"), "it's");
        assert_eq!(clean_text("a &amp;amp; b"), "a & b");
        assert_eq!(clean_text("&#65;&#x42; &bogus; &"), "AB &bogus; &");
    }

    #[test]
    fn malformed_merges_rejected() {
        let err = BpeTokenizer::from_reader(Cursor::new("#v\nonlyone\n"), 77).unwrap_err();
        assert!(matches!(err, EncoderError::Asset(_)));
    }
}
