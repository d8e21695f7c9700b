//! Shared workloads for the criterion benches.

use babelbot_core::engine::{extract_action_lines, FixtureCorpus};
use babelbot_core::perception::GroundingCandidate;
use babelbot_core::simulator::{bundled_map, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn office_world() -> World {
    World::from_map(&bundled_map("office").expect("bundled office map")).expect("valid map")
}

/// (text, language) of every fixture instruction.
pub fn instructions() -> Vec<(String, String)> {
    FixtureCorpus::bundled()
        .records()
        .iter()
        .map(|r| (r.text.clone(), r.lang.clone()))
        .collect()
}

/// Action lines of every fixture reply, with the reply language.
pub fn reply_lines() -> Vec<(Vec<String>, String)> {
    FixtureCorpus::bundled()
        .records()
        .iter()
        .map(|r| (extract_action_lines(&r.reply), r.lang.clone()))
        .filter(|(lines, _)| !lines.is_empty())
        .collect()
}

pub const LABELS: &[&str] = &[
    "chair", "person", "bottle", "cup", "table", "couch", "potted plant", "tv", "laptop",
    "backpack",
];

/// `n` tracked candidates with random label distributions.
pub fn candidates(n: usize, seed: u64) -> Vec<GroundingCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let raw: Vec<f64> = LABELS.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            GroundingCandidate {
                track_id: i as u64 + 1,
                labels: LABELS.iter().map(|s| s.to_string()).collect(),
                p_prime: raw.iter().map(|p| p / z).collect(),
            }
        })
        .collect()
}

/// Reference/hypothesis token pairs of a typical instruction length.
pub fn translation_pairs() -> Vec<(Vec<String>, Vec<String>)> {
    let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    [
        ("move forward two meters and then turn left", "move two meters forward then turn to the left"),
        ("go to the kitchen and take a picture of the table", "go into the kitchen and photograph the table"),
        ("if you see a chair go to it otherwise turn around", "otherwise turn around if you see no chair go to it"),
        ("limit your speed to half a meter per second", "limit speed to half meter per second"),
    ]
    .iter()
    .map(|(r, h)| (split(r), split(h)))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_populated() {
        assert_eq!(instructions().len(), 200);
        assert!(reply_lines().len() >= 190);
        let c = candidates(5, 1);
        assert_eq!(c.len(), 5);
        assert!((c[0].p_prime.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(office_world().inflated.is_free(10.0, 6.0));
    }
}
