//! Synthetic courses with planted structure.
//!
//! Assets fall into contiguous blocks. Each asset's latent features are its
//! block mean plus noise, and its popularity is drawn from
//! `Poisson(exp(w*·x + b))`. That many distinct non-creator students then
//! visit it. Every student walks through their visits so that consecutive
//! interactions stay inside a block with the configured affinity. Content
//! text mixes per-block topic words with generic words, and the emitted
//! word-vector table places each block's topic words around a shared
//! direction.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::content_embed::{write_content, write_word_vectors, ContentDocument};
use crate::error::{Error, Result};
use crate::event_log::{write_creators, write_events, EventRecord};
use crate::features::{write_instructor, AssetType, InstructorFeatures};

pub const EVENTS_FILE: &str = "events.csv";
pub const CREATORS_FILE: &str = "creators.csv";
pub const CONTENT_FILE: &str = "content.csv";
pub const INSTRUCTOR_FILE: &str = "instructor.csv";
pub const WORD_VECTORS_FILE: &str = "word_vectors.txt";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const MAX_REVISITS_IN_ROW: usize = 50;
const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "ze", "ba", "de", "fi", "go", "hu", "ja",
    "ne", "po", "ri", "su",
];
const TYPE_SHARES: [(AssetType, f64); 4] = [
    (AssetType::CollabWb, 0.38),
    (AssetType::Asset, 0.35),
    (AssetType::SoloWb, 0.21),
    (AssetType::Curated, 0.06),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_assets: usize,
    pub n_blocks: usize,
    /// Probability that a student's next interaction stays in the current block.
    pub affinity: f64,
    /// Planted popularity weights over the latent features.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Standard deviation of block means in latent space.
    pub block_spread: f64,
    /// Standard deviation of each asset around its block mean.
    pub latent_noise: f64,
    /// Share of assets that receive instructor codes.
    pub instructor_fraction: f64,
    /// Generic (block-independent) vocabulary size.
    pub vocab_size: usize,
    /// Topic words per block.
    pub topic_words: usize,
    /// Chance that a content word is drawn from the asset's block topic.
    /// Zero makes content carry no block information.
    pub topic_word_prob: f64,
    pub word_dim: usize,
    /// Course window start, ms since the epoch.
    pub course_start: i64,
    pub course_days: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_students: 100,
            n_assets: 3000,
            n_blocks: 10,
            affinity: 0.85,
            weights: vec![0.6, -0.4, 0.5, 0.3, -0.2],
            bias: 4f64.ln(),
            block_spread: 1.0,
            latent_noise: 0.25,
            instructor_fraction: 0.09,
            vocab_size: 2000,
            topic_words: 25,
            topic_word_prob: 0.5,
            word_dim: 50,
            // 2016-08-24T00:00:00Z
            course_start: 1_471_996_800_000,
            course_days: 105,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.n_students < 2 {
            return fail(format!("n_students must be at least 2, got {}", self.n_students));
        }
        if self.n_blocks == 0 || self.n_assets == 0 || !self.n_assets.is_multiple_of(self.n_blocks) {
            return fail(format!(
                "n_blocks ({}) must be positive and divide n_assets ({})",
                self.n_blocks, self.n_assets
            ));
        }
        if !(0.5..=1.0).contains(&self.affinity) {
            return fail(format!("affinity must be in [0.5, 1], got {}", self.affinity));
        }
        if self.weights.is_empty() || self.weights.iter().chain([&self.bias]).any(|v| !v.is_finite()) {
            return fail("weights must be non-empty and finite, bias finite".into());
        }
        for (name, v) in [
            ("instructor_fraction", self.instructor_fraction),
            ("topic_word_prob", self.topic_word_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if !(self.block_spread >= 0.0 && self.latent_noise >= 0.0) {
            return fail("block_spread and latent_noise must be non-negative".into());
        }
        if self.vocab_size == 0 || self.vocab_size > SYLLABLES.len().pow(3) {
            return fail(format!("vocab_size must be in 1..={}", SYLLABLES.len().pow(3)));
        }
        if self.topic_words == 0 || self.n_blocks * self.topic_words > SYLLABLES.len().pow(4) {
            return fail("topic_words must be positive and n_blocks * topic_words below 160000".into());
        }
        if self.word_dim == 0 || self.course_days == 0 || self.course_start < 0 {
            return fail("word_dim and course_days must be positive, course_start non-negative".into());
        }
        Ok(())
    }

    pub fn course_end(&self) -> i64 {
        self.course_start + i64::from(self.course_days) * 86_400_000 - 1
    }

    pub fn block_of(&self, asset: usize) -> usize {
        asset / (self.n_assets / self.n_blocks)
    }
}

/// What the generator planted, for checking the pipeline against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub asset_ids: Vec<String>,
    pub blocks: Vec<usize>,
    pub latent: Vec<Vec<f64>>,
    pub popularity: Vec<u64>,
    pub creators: Vec<String>,
    pub topic_words: Vec<Vec<String>>,
    pub instructor_coded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCourse {
    pub events: Vec<EventRecord>,
    pub creators: Vec<(String, String)>,
    pub content: Vec<ContentDocument>,
    pub instructor: Vec<InstructorFeatures>,
    pub word_vectors: Vec<(String, Vec<f64>)>,
    pub truth: GroundTruth,
}

pub fn asset_id(i: usize) -> String {
    format!("a{i:05}")
}

pub fn student_id(i: usize) -> String {
    format!("s{i:04}")
}

fn word(mut k: usize, syllables: usize) -> String {
    let mut w = String::with_capacity(2 * syllables);
    for _ in 0..syllables {
        w.push_str(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
    }
    w
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Per-student visit order over `pool` (asset indices), revisits included.
/// Each step stays in the current block with probability `affinity`, moving to
/// an unvisited asset there or else revisiting another one; otherwise it moves
/// to another block, preferring blocks with unvisited assets.
fn walk(pool: &[usize], block_of: &dyn Fn(usize) -> usize, n_blocks: usize, affinity: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut unvisited: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    for &a in pool {
        unvisited[block_of(a)].push(a);
    }
    for u in unvisited.iter_mut() {
        u.shuffle(rng);
    }
    let mut visited: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    let mut remaining = pool.len();
    let mut out = Vec::with_capacity(pool.len() * 2);
    if remaining == 0 {
        return out;
    }
    let first = pool[rng.random_range(0..pool.len())];
    let b0 = block_of(first);
    unvisited[b0].retain(|&a| a != first);
    visited[b0].push(first);
    out.push(first);
    remaining -= 1;
    let (mut cur, mut current_block, mut revisits) = (first, b0, 0usize);

    while remaining > 0 {
        let stay = |unvisited: &mut Vec<Vec<usize>>, visited: &Vec<Vec<usize>>, rng: &mut ChaCha8Rng, revisits: usize| {
            if let Some(a) = unvisited[current_block].pop() {
                return Some((a, false));
            }
            if affinity >= 1.0 || revisits >= MAX_REVISITS_IN_ROW {
                return None;
            }
            let others: Vec<usize> = visited[current_block].iter().copied().filter(|&a| a != cur).collect();
            (!others.is_empty()).then(|| (others[rng.random_range(0..others.len())], true))
        };
        let switch = |unvisited: &mut Vec<Vec<usize>>, visited: &Vec<Vec<usize>>, rng: &mut ChaCha8Rng| {
            let open: Vec<usize> = (0..n_blocks).filter(|&b| b != current_block && !unvisited[b].is_empty()).collect();
            if !open.is_empty() {
                let b = open[rng.random_range(0..open.len())];
                return unvisited[b].pop().map(|a| (a, false));
            }
            let seen: Vec<usize> = (0..n_blocks).filter(|&b| b != current_block && !visited[b].is_empty()).collect();
            if seen.is_empty() {
                return None;
            }
            let b = seen[rng.random_range(0..seen.len())];
            Some((visited[b][rng.random_range(0..visited[b].len())], true))
        };
        let step = if rng.random::<f64>() < affinity {
            stay(&mut unvisited, &visited, rng, revisits).or_else(|| switch(&mut unvisited, &visited, rng))
        } else {
            switch(&mut unvisited, &visited, rng).or_else(|| stay(&mut unvisited, &visited, rng, revisits))
        };
        let Some((a, revisit)) = step else {
            break;
        };
        current_block = block_of(a);
        if revisit {
            revisits += 1;
        } else {
            revisits = 0;
            visited[current_block].push(a);
            remaining -= 1;
        }
        cur = a;
        out.push(a);
    }
    out
}

pub fn generate(config: &SynthConfig) -> Result<SynthCourse> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, s, p) = (config.n_assets, config.n_students, config.weights.len());
    let block_of = |a: usize| config.block_of(a);
    let asset_ids: Vec<String> = (0..n).map(asset_id).collect();
    let students: Vec<String> = (0..s).map(student_id).collect();

    // latent features and planted popularity
    let spread = normal(config.block_spread);
    let noise = normal(config.latent_noise);
    let means: Vec<Vec<f64>> = (0..config.n_blocks)
        .map(|_| (0..p).map(|_| spread.sample(&mut rng)).collect())
        .collect();
    let latent: Vec<Vec<f64>> = (0..n)
        .map(|a| means[block_of(a)].iter().map(|m| m + noise.sample(&mut rng)).collect())
        .collect();
    let log_rate: Vec<f64> = latent
        .iter()
        .map(|x| config.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + config.bias)
        .collect();
    let popularity: Vec<u64> = log_rate
        .iter()
        .map(|&eta| poisson(&mut rng, eta.exp()).min(s as u64 - 1))
        .collect();

    // creators and visitors
    let creator: Vec<usize> = (0..n).map(|_| rng.random_range(0..s)).collect();
    let mut pools: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); s];
    for a in 0..n {
        pools[creator[a]].insert(a);
        for k in index::sample(&mut rng, s - 1, popularity[a] as usize) {
            let student = if k < creator[a] { k } else { k + 1 };
            pools[student].insert(a);
        }
    }

    // walks and events
    let span = config.course_end() - config.course_start;
    let extra = Poisson::new(0.5).expect("positive mean");
    let mut events = Vec::new();
    for (u, pool) in pools.iter().enumerate() {
        let pool: Vec<usize> = pool.iter().copied().collect();
        let order = walk(&pool, &block_of, config.n_blocks, config.affinity, &mut rng);
        let slot = span / (order.len() as i64 + 1);
        let mut seen = BTreeSet::new();
        for (k, &a) in order.iter().enumerate() {
            let t = config.course_start + slot * k as i64 + rng.random_range(0..(slot / 2).max(1));
            let first_time = seen.insert(a);
            let aid = Some(asset_ids[a].as_str());
            if first_time && creator[a] == u {
                events.push(EventRecord::new(&students[u], aid, "upload", t)?);
            } else if first_time {
                events.push(EventRecord::new(&students[u], aid, "view", t)?);
                for j in 0..extra.sample(&mut rng) as i64 {
                    let kind = ["like", "comment", "view"][rng.random_range(0..3)];
                    events.push(EventRecord::new(&students[u], aid, kind, t + 1000 * (j + 1))?);
                }
            } else {
                events.push(EventRecord::new(&students[u], aid, "view", t)?);
            }
        }
        for _ in 0..1 + poisson(&mut rng, 3.0) {
            let t = config.course_start + rng.random_range(0..=span);
            events.push(EventRecord::new(&students[u], None, "login", t)?);
        }
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.user_id.cmp(&b.user_id)));

    // content text and word vectors
    let topic_words: Vec<Vec<String>> = (0..config.n_blocks)
        .map(|b| (0..config.topic_words).map(|k| word(b * config.topic_words + k, 4)).collect())
        .collect();
    let title_extra = Poisson::new(1.7).expect("positive mean");
    let desc_len_dist = Exp::new(1.0 / 80.0).expect("positive rate");
    let mut content = Vec::with_capacity(n);
    let mut lengths = Vec::with_capacity(n);
    for (a, id) in asset_ids.iter().enumerate() {
        let draw = |rng: &mut ChaCha8Rng| {
            if rng.random::<f64>() < config.topic_word_prob {
                let t = &topic_words[block_of(a)];
                t[rng.random_range(0..t.len())].clone()
            } else {
                word(rng.random_range(0..config.vocab_size), 3)
            }
        };
        let title_len = (1 + title_extra.sample(&mut rng) as u32).min(15);
        let desc_len = if rng.random::<f64>() < 0.45 {
            0
        } else {
            (Distribution::<f64>::sample(&desc_len_dist, &mut rng).round() as u32).clamp(1, 344)
        };
        let mut title: Vec<String> = (0..title_len).map(|_| draw(&mut rng)).collect();
        if let Some(first) = title.first_mut() {
            *first = first[..1].to_uppercase() + &first[1..];
        }
        let mut desc: Vec<String> = (0..desc_len).map(|_| draw(&mut rng)).collect();
        if desc_len > 0 && rng.random::<f64>() < 0.3 {
            desc[0] = format!("#week{}", rng.random_range(1..=15));
        }
        content.push(ContentDocument {
            asset_id: id.clone(),
            title: title.join(" "),
            description: desc.join(" "),
        });
        lengths.push((title_len, desc_len));
    }
    let d = config.word_dim;
    let coord = normal(1.0 / (d as f64).sqrt());
    let mut word_vectors: Vec<(String, Vec<f64>)> = (0..config.vocab_size)
        .map(|k| (word(k, 3), (0..d).map(|_| coord.sample(&mut rng)).collect()))
        .collect();
    let jitter = normal(0.3 / (d as f64).sqrt());
    for words in &topic_words {
        let direction: Vec<f64> = (0..d).map(|_| coord.sample(&mut rng)).collect();
        for w in words {
            word_vectors.push((w.clone(), direction.iter().map(|c| c + jitter.sample(&mut rng)).collect()));
        }
    }

    // instructor codes on a random subset
    let n_coded = (config.instructor_fraction * n as f64).round() as usize;
    let mut coded: Vec<usize> = index::sample(&mut rng, n, n_coded).into_vec();
    coded.sort_unstable();
    let mean_eta = log_rate.iter().sum::<f64>() / n as f64;
    let sd_eta = (log_rate.iter().map(|e| (e - mean_eta).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-12);
    let rating = Normal::new(3.15, 1.2).expect("valid");
    let day = Normal::new(5.0, 3.7).expect("valid");
    let mut instructor = Vec::with_capacity(coded.len());
    for &a in &coded {
        let z = (log_rate[a] - mean_eta) / sd_eta;
        let score = |rng: &mut ChaCha8Rng| (rating.sample(rng) + 0.3 * z).round().clamp(1.0, 5.0) as u8;
        let acad = score(&mut rng);
        let creativity = score(&mut rng);
        let day_asgmt = Distribution::<f64>::sample(&day, &mut rng).round().clamp(-5.0, 43.0) as i64;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let asset_type = TYPE_SHARES
            .iter()
            .find(|(_, share)| {
                acc += share;
                u < acc
            })
            .map_or(AssetType::Curated, |(t, _)| *t);
        instructor.push(InstructorFeatures {
            asset_id: asset_ids[a].clone(),
            acad,
            creativity,
            day_asgmt,
            title_len: lengths[a].0,
            desc_len: lengths[a].1,
            asset_type,
        });
    }

    let creators: Vec<(String, String)> = (0..n)
        .map(|a| (asset_ids[a].clone(), students[creator[a]].clone()))
        .collect();
    let truth = GroundTruth {
        config: config.clone(),
        blocks: (0..n).map(block_of).collect(),
        latent,
        popularity,
        creators: creator.iter().map(|&c| students[c].clone()).collect(),
        topic_words,
        instructor_coded: coded.iter().map(|&a| asset_ids[a].clone()).collect(),
        asset_ids,
    };
    Ok(SynthCourse {
        events,
        creators,
        content,
        instructor,
        word_vectors,
        truth,
    })
}

impl SynthCourse {
    /// Writes every file into `dir` (created if needed).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        write_events(&self.events, open(EVENTS_FILE)?)?;
        write_creators(&self.creators, open(CREATORS_FILE)?)?;
        write_content(&self.content, open(CONTENT_FILE)?)?;
        write_instructor(&self.instructor, open(INSTRUCTOR_FILE)?)?;
        write_word_vectors(&self.word_vectors, open(WORD_VECTORS_FILE)?)?;
        let mut truth = serde_json::to_string_pretty(&self.truth)?;
        truth.push('\n');
        fs::write(dir.join(GROUND_TRUTH_FILE), truth)?;
        Ok(())
    }
}
