use serde::{Deserialize, Serialize};

use crate::data::IMAGE_TAG;
use crate::error::{PipeError, Result};

/// Character vocabulary: newline, printable ASCII, and one reserved id for
/// the image placeholder tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharVocabulary {
    alphabet: Vec<char>,
}

impl Default for CharVocabulary {
    fn default() -> Self {
        let mut alphabet = vec!['\n'];
        alphabet.extend((0x20u8..=0x7e).map(char::from));
        Self { alphabet }
    }
}

impl CharVocabulary {
    pub fn size(&self) -> usize {
        self.alphabet.len() + 1
    }

    /// Reserved id of the `<image>` tag.
    pub fn image_id(&self) -> u32 {
        self.alphabet.len() as u32
    }

    pub fn id(&self, ch: char) -> Option<u32> {
        match ch {
            '\n' => Some(0),
            ' '..='~' => Some(ch as u32 - 0x20 + 1),
            _ => None,
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = Vec::with_capacity(text.len());
        let mut rest = text;
        let mut offset = 0;
        while let Some(ch) = rest.chars().next() {
            if rest.starts_with(IMAGE_TAG) {
                ids.push(self.image_id());
                rest = &rest[IMAGE_TAG.len()..];
                offset += IMAGE_TAG.chars().count();
                continue;
            }
            ids.push(self.id(ch).ok_or(PipeError::Vocabulary { ch, offset })?);
            rest = &rest[ch.len_utf8()..];
            offset += 1;
        }
        Ok(ids)
    }

    pub fn token_str(&self, id: u32) -> Option<String> {
        if id == self.image_id() {
            Some(IMAGE_TAG.to_string())
        } else {
            self.alphabet.get(id as usize).map(|c| c.to_string())
        }
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String> {
        ids.iter()
            .map(|&id| {
                self.token_str(id)
                    .ok_or_else(|| PipeError::Data(format!("token id {id} is out of range")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_a_bijection() {
        let v = CharVocabulary::default();
        assert_eq!(v.size(), 97);
        for (i, c) in v.alphabet.iter().enumerate() {
            assert_eq!(v.id(*c), Some(i as u32));
        }
    }

    #[test]
    fn tokenize_examples() {
        let v = CharVocabulary::default();
        assert!(v.tokenize("").unwrap().is_empty());
        assert_eq!(
            v.tokenize("<image><image>").unwrap(),
            vec![v.image_id(), v.image_id()]
        );
        let s = "{latitude: [11.65, -2.0]}. <imag <image>";
        assert_eq!(v.detokenize(&v.tokenize(s).unwrap()).unwrap(), s);
    }

    #[test]
    fn unknown_character_names_offset() {
        let v = CharVocabulary::default();
        let err = v.tokenize("<image>ab°c").unwrap_err();
        match err {
            PipeError::Vocabulary { ch, offset } => {
                assert_eq!(ch, '°');
                assert_eq!(offset, 9);
            }
            other => panic!("{other}"),
        }
        assert!(v.detokenize(&[500]).is_err());
    }
}
