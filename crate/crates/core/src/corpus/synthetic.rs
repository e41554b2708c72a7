//! Deterministic generator for a RockYou-style desk corpus.
//!
//! Real leaks cannot ship with the repository, so experiments and tests use a
//! synthetic leak that reproduces the coarse structure users exhibit: Zipfian
//! base words, digit suffixes, years, capitalisation, leet substitutions,
//! keyboard walks and a tail of random strings.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::leak::LeakCorpus;

const WORDS: &[&str] = &[
    "password", "iloveyou", "princess", "rockyou", "abc", "nicole", "daniel", "babygirl", "monkey", "lovely",
    "jessica", "michael", "ashley", "qwerty", "iloveu", "michelle", "tigger", "sunshine", "chocolate",
    "soccer", "anthony", "friends", "butterfly", "purple", "angel", "jordan", "liverpool", "justin", "loveme",
    "football", "secret", "andrea", "jennifer", "joshua", "bubbles", "superman", "hannah", "amanda", "loveyou",
    "pretty", "basketball", "andrew", "angels", "tweety", "flower", "playboy", "hello", "elizabeth", "hottie",
    "tinkerbell", "charlie", "samantha", "barbie", "chelsea", "lovers", "teamo", "jasmine", "brandon",
    "melissa", "eminem", "matthew", "robert", "danielle", "forever", "family", "jonathan", "computer",
    "whatever", "dragon", "vanessa", "cookie", "naruto", "summer", "sweety", "spongebob", "joseph", "junior",
    "softball", "taylor", "yellow", "daniela", "lauren", "mickey", "princesa", "alexandra", "alexis", "jesus",
    "estrella", "miguel", "william", "thomas", "beautiful", "mylove", "angela", "poohbear", "patrick",
    "iloveme", "sakura", "adrian", "alexander", "destiny", "christian", "lovelove", "america", "dancer",
    "monica", "richard", "victoria", "orange", "blessed", "sexy", "love", "baby", "star", "kitty", "honey",
    "money", "shadow", "master", "killer", "ginger", "pepper", "banana", "cheese", "apple", "peanut",
    "maggie", "buster", "silver", "diamond", "summer", "winter", "spring", "hunter", "ranger", "thunder",
];

const WALKS: &[&str] = &[
    "123456", "12345", "123456789", "12345678", "1234567", "654321", "111111", "000000", "123123",
    "qwerty", "qwertyuiop", "asdfgh", "asdfghjkl", "zxcvbnm", "1q2w3e4r", "qazwsx", "abc123", "a1b2c3",
    "112233", "121212", "666666", "7777777", "987654321", "147258369", "159753", "789456",
];

const SYMBOLS: &[char] = &['!', '@', '#', '.', '*', '_', '$', '?'];

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| 1.0 / (r as f64).powf(exponent)).collect()
}

fn leet(word: &str, rng: &mut impl Rng) -> String {
    word.chars()
        .map(|c| {
            let sub = match c {
                'a' => '4',
                'e' => '3',
                'i' => '1',
                'o' => '0',
                's' => '5',
                _ => return c,
            };
            if rng.gen_bool(0.6) {
                sub
            } else {
                c
            }
        })
        .collect()
}

fn capitalize(word: &str) -> String {
    let mut cs = word.chars();
    match cs.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + cs.as_str(),
        None => String::new(),
    }
}

struct Generator {
    words: WeightedIndex<f64>,
    walks: WeightedIndex<f64>,
    templates: WeightedIndex<f64>,
    suffix_len: WeightedIndex<f64>,
}

impl Generator {
    fn new() -> Self {
        Self {
            words: WeightedIndex::new(zipf_weights(WORDS.len(), 1.0)).unwrap(),
            walks: WeightedIndex::new(zipf_weights(WALKS.len(), 1.2)).unwrap(),
            // word, word+digits, word+year, Word+digits, leet word, digits,
            // walk, word+symbol, word+word, random tail, name+digits+symbol
            templates: WeightedIndex::new([16.0, 24.0, 8.0, 6.0, 4.0, 12.0, 10.0, 4.0, 5.0, 8.0, 3.0]).unwrap(),
            suffix_len: WeightedIndex::new([30.0, 30.0, 20.0, 10.0]).unwrap(),
        }
    }

    fn word(&self, rng: &mut impl Rng) -> &'static str {
        WORDS[self.words.sample(rng)]
    }

    fn digits(&self, rng: &mut impl Rng) -> String {
        let n = self.suffix_len.sample(rng) + 1;
        // Biased toward "1", "12", "123" style sequences.
        if rng.gen_bool(0.45) {
            return "1234".chars().take(n).collect();
        }
        if rng.gen_bool(0.2) {
            let d = rng.gen_range(0..10u8);
            return std::iter::repeat_n(char::from(b'0' + d), n).collect();
        }
        (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
    }

    fn year(rng: &mut impl Rng) -> String {
        let y = if rng.gen_bool(0.7) {
            rng.gen_range(1980..2000)
        } else {
            rng.gen_range(2000..2010)
        };
        if rng.gen_bool(0.4) {
            format!("{:02}", y % 100)
        } else {
            y.to_string()
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> String {
        match self.templates.sample(rng) {
            0 => self.word(rng).to_owned(),
            1 => format!("{}{}", self.word(rng), self.digits(rng)),
            2 => format!("{}{}", self.word(rng), Self::year(rng)),
            3 => format!("{}{}", capitalize(self.word(rng)), self.digits(rng)),
            4 => leet(self.word(rng), rng),
            5 => {
                let n = rng.gen_range(6..=10);
                if rng.gen_bool(0.5) {
                    // ddmmyy / ddmmyyyy birthdays
                    let s = format!("{:02}{:02}{}", rng.gen_range(1..=28), rng.gen_range(1..=12), Self::year(rng));
                    s
                } else {
                    (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
                }
            }
            6 => WALKS[self.walks.sample(rng)].to_owned(),
            7 => format!("{}{}", self.word(rng), SYMBOLS[rng.gen_range(0..SYMBOLS.len())]),
            8 => format!("{}{}", self.word(rng), self.word(rng)),
            9 => {
                let n = rng.gen_range(5..=12);
                const POOL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ!@#$%&*";
                (0..n).map(|_| char::from(POOL[rng.gen_range(0..POOL.len())])).collect()
            }
            _ => format!(
                "{}{}{}",
                capitalize(self.word(rng)),
                self.digits(rng),
                SYMBOLS[rng.gen_range(0..SYMBOLS.len())]
            ),
        }
    }
}

/// Draws `observations` passwords and aggregates them into a leak.
pub fn desk_corpus(observations: usize, seed: u64) -> LeakCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = Generator::new();
    LeakCorpus::from_counts((0..observations).map(|_| (generator.sample(&mut rng), 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::top_symbols;

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(desk_corpus(2000, 3), desk_corpus(2000, 3));
        assert_ne!(desk_corpus(2000, 3), desk_corpus(2000, 4));
    }

    #[test]
    fn frequent_symbols_are_letters_and_digits() {
        let c = desk_corpus(20_000, 1);
        let top = top_symbols(&c, 25);
        let alnum = top.symbols.iter().filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit()).count();
        assert!(alnum >= 20, "{:?}", top.symbols);
        let heads = c.by_frequency();
        assert!(heads[0].1 > 50, "head too flat: {:?}", &heads[..3]);
    }
}
