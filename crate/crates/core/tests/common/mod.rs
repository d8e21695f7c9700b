//! Independent oracles shared by the oracle tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use babelbot_core::perception::{GroundingCandidate, SimilarityScorer};
use babelbot_core::simulator::OccupancyGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// 1 / (1 + exp(-0.2 / 0.07)), evaluated at 50 significant digits.
pub const SOFTMAX_ORACLE: f64 = 0.945_686_733_867_359_4;
// -0.5 - 0.07 * ln 2 at 50 digits.
pub const ENERGY_ORACLE: f64 = -0.548_520_302_639_196_2;

// Two-step filter state, frozen from an independent numpy run.
pub const KALMAN_FROZEN_STATE: [f64; 6] = [
    1.106_424_399_740_428_4,
    0.152_985_074_626_865_67,
    0.018_624_269_954_574_96,
    1.090_979_883_192_732_2,
    0.143_283_582_089_552_25,
    0.020_921_479_558_728_09,
];
pub const KALMAN_FROZEN_TRACE: f64 = 0.117_483_776_768_332_24;

// Textbook Kalman filter on plain arrays, standard covariance update.
pub mod oracle {
    pub type M6 = [[f64; 6]; 6];

    fn mul(a: &M6, b: &M6) -> M6 {
        let mut c = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    fn transpose(a: &M6) -> M6 {
        let mut t = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                t[i][j] = a[j][i];
            }
        }
        t
    }

    fn inv3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                let (c, d) = ((i + 1) % 3, (i + 2) % 3);
                r[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
            }
        }
        r
    }

    pub fn step(x: &mut [f64; 6], p: &mut M6, z: [f64; 3], dt: f64, q: f64, r: f64) {
        let mut f = [[0.0; 6]; 6];
        for i in 0..6 {
            f[i][i] = 1.0;
        }
        for i in 0..3 {
            f[i][i + 3] = dt;
        }
        let mut xp = [0.0; 6];
        for i in 0..6 {
            for k in 0..6 {
                xp[i] += f[i][k] * x[k];
            }
        }
        let mut pp = mul(&mul(&f, p), &transpose(&f));
        for i in 0..6 {
            pp[i][i] += q;
        }
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = pp[i][j] + if i == j { r } else { 0.0 };
            }
        }
        let si = inv3(s);
        let mut k = [[0.0; 3]; 6];
        for i in 0..6 {
            for j in 0..3 {
                for l in 0..3 {
                    k[i][j] += pp[i][l] * si[l][j];
                }
            }
        }
        let innov = [z[0] - xp[0], z[1] - xp[1], z[2] - xp[2]];
        for i in 0..6 {
            x[i] = xp[i] + (0..3).map(|j| k[i][j] * innov[j]).sum::<f64>();
        }
        let mut ikh = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                let kh = if j < 3 { k[i][j] } else { 0.0 };
                ikh[i][j] = if i == j { 1.0 } else { 0.0 } - kh;
            }
        }
        *p = mul(&ikh, &pp);
    }
}

pub fn random_candidates(rng: &mut ChaCha8Rng) -> Vec<GroundingCandidate> {
    let n = rng.gen_range(1..6);
    let mut ids: Vec<u64> = (1..=20).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    (0..n)
        .map(|i| {
            let m = rng.gen_range(1..4);
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            GroundingCandidate {
                track_id: ids[i],
                labels: (0..m)
                    .map(|j| ["chair", "cup", "person", "plant"][(i + j) % 4].to_string())
                    .collect(),
                p_prime: raw.iter().map(|r| r / z).collect(),
            }
        })
        .collect()
}

/// Best (track id, label index) by scoring every pair; ties go to the
/// lowest track id, then the lowest label index.
pub fn exhaustive_select(
    cands: &[GroundingCandidate],
    cmd: &str,
    l1: f64,
    l2: f64,
    scorer: &dyn SimilarityScorer,
) -> (u64, usize) {
    let mut all: Vec<(f64, u64, usize)> = Vec::new();
    for c in cands {
        for (j, (l, p)) in c.labels.iter().zip(&c.p_prime).enumerate() {
            all.push((l1 * p.ln() + l2 * scorer.sim(l, cmd), c.track_id, j));
        }
    }
    let best = all.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let want = all
        .iter()
        .filter(|a| a.0 == best)
        .min_by_key(|a| (a.1, a.2))
        .unwrap();
    (want.1, want.2)
}

/// Plain Dijkstra with linear-scan extraction, same move rules as the planner.
/// Returns the optimal (straight, diagonal) step counts.
pub fn dijkstra_oracle(g: &OccupancyGrid, s: (i64, i64), t: (i64, i64)) -> Option<(u32, u32)> {
    let (w, h) = (g.width as i64, g.height as i64);
    let n = (w * h) as usize;
    let idx = |c: (i64, i64)| (c.1 * w + c.0) as usize;
    let mut dist = vec![f64::INFINITY; n];
    let mut steps = vec![(0u32, 0u32); n];
    let mut done = vec![false; n];
    if g.occupied(s.0, s.1) || g.occupied(t.0, t.1) {
        return None;
    }
    dist[idx(s)] = 0.0;
    loop {
        let mut best = None;
        for k in 0..n {
            if !done[k] && dist[k].is_finite() && best.is_none_or(|b: usize| dist[k] < dist[b]) {
                best = Some(k);
            }
        }
        let Some(k) = best else { break };
        done[k] = true;
        let c = (k as i64 % w, k as i64 / w);
        if c == t {
            return Some(steps[k]);
        }
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                if (di, dj) == (0, 0) {
                    continue;
                }
                let nc = (c.0 + di, c.1 + dj);
                if nc.0 < 0 || nc.1 < 0 || nc.0 >= w || nc.1 >= h || g.occupied(nc.0, nc.1) {
                    continue;
                }
                if di != 0 && dj != 0 && (g.occupied(c.0 + di, c.1) || g.occupied(c.0, c.1 + dj)) {
                    continue;
                }
                let (mut a, mut b) = steps[k];
                if di != 0 && dj != 0 {
                    b += 1;
                } else {
                    a += 1;
                }
                let d = a as f64 + b as f64 * 2f64.sqrt();
                let ni = idx(nc);
                if d < dist[ni] - 1e-9 {
                    dist[ni] = d;
                    steps[ni] = (a, b);
                }
            }
        }
    }
    None
}

pub fn random_grid(rng: &mut ChaCha8Rng, fill: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::empty(50, 50, 1.0, [0.0, 0.0]);
    for j in 0..50 {
        for i in 0..50 {
            if rng.gen_bool(fill) {
                g.set_occupied(i, j, true);
            }
        }
    }
    g
}

/// Sentence BLEU values from an independent reference implementation
/// (NLTK `sentence_bleu`, uniform 4-gram weights, every precision floored
/// at 1e-9), whitespace tokenization.
pub const BLEU_ORACLE: [(&str, &str, f64); 20] = [
    ("move forward two meters at zero point two meters per second", "move forward two meters at zero point two meters per second", 1.0),
    ("move forward two meters at zero point two meters per second", "go forward two meters at zero point two meters per second", 0.8931539818068694),
    ("turn left ninety degrees and then move forward three meters", "turn left by ninety degrees then go forward three meters", 0.0025819888974716117),
    ("navigate to the kitchen and report your position", "go to the kitchen and tell me your position", 0.3549481056010053),
    ("the cat sat on the mat", "the cat is on the mat", 0.003343701524882112),
    ("the cat sat on the mat", "on the mat sat the cat", 0.0034996355115805822),
    ("fahre zwei meter vorwärts mit null komma zwei metern pro sekunde", "fahre zwei meter nach vorne mit null komma zwei metern pro sekunde", 0.6340466277046861),
    ("avance de deux mètres puis tourne à gauche", "avance deux mètres et tourne à gauche", 0.0026376747002838856),
    ("gira a la derecha noventa grados", "gira noventa grados a la derecha", 0.0034996355115805822),
    ("двигайся вперёд на два метра", "двигайся вперёд два метра", 2.225376844229316e-05),
    ("向 前 移 动 两 米", "向 前 走 两 米", 2.058998837659479e-05),
    ("nenda mbele mita mbili kisha simama", "nenda mbele mita mbili halafu simama", 0.537284965911771),
    ("waka go front two meter", "waka go front two meter now now", 0.6147881529512643),
    ("move in a circle of radius one meter", "move in a circle with a radius of one meter", 0.3356891925037239),
    ("capture an image of the bottle", "take a picture of the bottle", 0.002659147948472495),
    ("a b c d e f g h", "h g f e d c b a", 1.7782794100389237e-07),
    ("describe your surroundings please", "describe the surroundings", 1.1513632359572773e-07),
    ("stop", "stop now", 1.4953487812212206e-07),
    ("move forward", "move forward two meters quickly and carefully", 1.4772199911861218e-05),
    ("go to the chair with the highest confidence", "go to the chair", 0.36787944117144233),
];

pub fn ws(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn oracle_lev(a: &[String], b: &[String]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let c = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j - 1] + c).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Exhaustive search over every sequence of up to 10 block moves: the
/// fewest shifts plus remaining edit distance.
pub fn oracle_ter_edits(r: &[String], h: &[String]) -> usize {
    let mut seen: HashMap<Vec<String>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(h.to_vec(), 0);
    queue.push_back(h.to_vec());
    let mut best = usize::MAX;
    while let Some(s) = queue.pop_front() {
        let depth = seen[&s];
        best = best.min(depth + oracle_lev(&s, r));
        if depth == 10 || depth >= best {
            continue;
        }
        let n = s.len();
        for i in 0..n {
            for j in i + 1..=n {
                let block = s[i..j].to_vec();
                let mut rest = s[..i].to_vec();
                rest.extend_from_slice(&s[j..]);
                for k in 0..=rest.len() {
                    let mut t = rest[..k].to_vec();
                    t.extend(block.iter().cloned());
                    t.extend_from_slice(&rest[k..]);
                    if !seen.contains_key(&t) {
                        seen.insert(t.clone(), depth + 1);
                        queue.push_back(t);
                    }
                }
            }
        }
    }
    best
}

pub fn ter_suite() -> Vec<(Vec<String>, Vec<String>)> {
    let mut suite: Vec<(Vec<String>, Vec<String>)> = [
        ("a b c d e", "c d a b e"),
        ("turn left ninety degrees", "turn ninety degrees left"),
        ("move forward two meters now", "now move forward two meters"),
        ("go to the kitchen", "go to kitchen the"),
        ("the cat sat on the mat", "on the mat sat the cat"),
        ("gira a la derecha noventa grados", "gira noventa grados a la derecha"),
        ("x y", "y x"),
        ("stop", "please stop now"),
        ("one two three", "four five six"),
    ]
    .iter()
    .map(|(r, h)| (ws(r), ws(h)))
    .collect();
    let vocab = ["go", "to", "the", "left", "right", "two", "m", "now"];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    while suite.len() < 60 {
        let rl = rng.gen_range(1..=6);
        let r: Vec<String> = (0..rl).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect();
        let mut h = r.clone();
        for _ in 0..rng.gen_range(0..3) {
            match rng.gen_range(0..3) {
                0 if h.len() > 1 => {
                    let i = rng.gen_range(0..h.len());
                    let j = rng.gen_range(0..h.len());
                    h.swap(i, j);
                }
                1 => {
                    let i = rng.gen_range(0..=h.len());
                    h.insert(i, vocab[rng.gen_range(0..vocab.len())].to_string());
                }
                _ if !h.is_empty() => {
                    let i = rng.gen_range(0..h.len());
                    h[i] = vocab[rng.gen_range(0..vocab.len())].to_string();
                }
                _ => {}
            }
        }
        if h.is_empty() || h.len() > 8 {
            continue;
        }
        suite.push((r, h));
    }
    suite
}
