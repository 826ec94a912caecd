//! Synthetic task corpora.
//!
//! Two built-in tasks exercise the toolkit end to end:
//!
//! - `addition`: two 2-digit operands with a column-by-column worked
//!   response (units digit, carry, tens digit, carry, then the full sum);
//!   the final token before EOS is the units digit of the sum.
//! - `paraphrase`: a slot-lookup question whose response is phrased by a
//!   stochastic grammar with three templates, all ending in the same answer
//!   token. The phrasing variety is the point: one prompt admits several
//!   valid responses that differ everywhere except the answer.
//!
//! Train and test splits are disjoint by prompt: the full prompt space is
//! enumerated, shuffled under the corpus seed, and split before responses
//! are sampled.

use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::StudentModel;
use crate::util::atomic_write;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;

/// One training pair: prompt ids and a response that ends in EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPair {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
}

impl CorpusPair {
    pub fn validate(&self, context_len: usize, eos: u32) -> Result<()> {
        if self.prompt.is_empty() || self.response.is_empty() {
            return Err(Error::invalid_input("prompt and response must be non-empty"));
        }
        if self.response.last() != Some(&eos) {
            return Err(Error::invalid_input("response must end with EOS"));
        }
        if self.prompt.len() + self.response.len() > context_len {
            return Err(Error::invalid_input(format!(
                "pair length {} exceeds context {context_len}",
                self.prompt.len() + self.response.len()
            )));
        }
        Ok(())
    }

    /// The task answer: the last token before the trailing EOS.
    pub fn answer(&self) -> Option<u32> {
        if self.response.len() >= 2 {
            Some(self.response[self.response.len() - 2])
        } else {
            None
        }
    }
}

/// Built-in synthetic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Addition,
    Paraphrase,
}

impl TaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "addition" => Ok(TaskKind::Addition),
            "paraphrase" => Ok(TaskKind::Paraphrase),
            other => Err(Error::config(format!(
                "unknown task `{other}` (expected addition or paraphrase)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Addition => "addition",
            TaskKind::Paraphrase => "paraphrase",
        }
    }

    /// Context length every pair of this task fits inside.
    pub fn context_len(self) -> usize {
        16
    }
}

/// A generated corpus: vocabulary plus prompt-disjoint train/test splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub task: TaskKind,
    pub vocab: Vocabulary,
    pub train: Vec<CorpusPair>,
    pub test: Vec<CorpusPair>,
    pub seed: u64,
}

// ── addition task ─────────────────────────────────────────────────────────

const ADD_DIGIT0: u32 = 4; // "0".."9" at ids 4..=13
const ADD_PLUS: u32 = 14;
const ADD_CARRY0: u32 = 15;
const ADD_CARRY1: u32 = 16;

fn addition_vocab() -> Vocabulary {
    let mut toks: Vec<String> = ["<bos>", "<eos>", "<pad>", "<sep>"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for d in 0..10 {
        toks.push(d.to_string());
    }
    toks.push("+".to_string());
    toks.push("c0".to_string());
    toks.push("c1".to_string());
    Vocabulary::new(toks, 0, 1, 2, 3).expect("builtin vocab")
}

fn addition_pair(v: &Vocabulary, a: u32, b: u32) -> CorpusPair {
    let d = |x: u32| ADD_DIGIT0 + x;
    let carry = |c: u32| if c == 0 { ADD_CARRY0 } else { ADD_CARRY1 };
    let prompt = vec![v.bos, d(a / 10), d(a % 10), ADD_PLUS, d(b / 10), d(b % 10), v.sep];
    let u = a % 10 + b % 10;
    let t = a / 10 + b / 10 + u / 10;
    let s = a + b;
    let response = vec![
        d(u % 10),
        carry(u / 10),
        d(t % 10),
        carry(t / 10),
        d(s / 100),
        d((s / 10) % 10),
        d(s % 10),
        v.eos,
    ];
    CorpusPair { prompt, response }
}

// ── paraphrase task ───────────────────────────────────────────────────────

const PAR_VALUE0: u32 = 4; // "v0".."v9" at ids 4..=13
const PAR_POS0: u32 = 14; // "p0".."p2" at ids 14..=16
const PAR_WHAT: u32 = 17;
const PAR_ANS: u32 = 18;
const PAR_IS: u32 = 19;
const PAR_IT: u32 = 20;
const PAR_EQUALS: u32 = 21;
const PAR_THE: u32 = 22;
const PAR_VALUE: u32 = 23;

fn paraphrase_vocab() -> Vocabulary {
    let mut toks: Vec<String> = ["<bos>", "<eos>", "<pad>", "<sep>"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for d in 0..10 {
        toks.push(format!("v{d}"));
    }
    for p in 0..3 {
        toks.push(format!("p{p}"));
    }
    for w in ["what", "ans", "is", "it", "equals", "the", "value"] {
        toks.push(w.to_string());
    }
    Vocabulary::new(toks, 0, 1, 2, 3).expect("builtin vocab")
}

fn paraphrase_prompt(v: &Vocabulary, slot: u32, vals: [u32; 3]) -> Vec<u32> {
    vec![
        v.bos,
        PAR_WHAT,
        PAR_POS0 + slot,
        PAR_VALUE0 + vals[0],
        PAR_VALUE0 + vals[1],
        PAR_VALUE0 + vals[2],
        v.sep,
    ]
}

fn paraphrase_response(v: &Vocabulary, answer: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let ans = PAR_VALUE0 + answer;
    let r: f64 = rng.random();
    if r < 0.5 {
        vec![PAR_ANS, PAR_IS, ans, v.eos]
    } else if r < 0.8 {
        vec![PAR_IT, PAR_EQUALS, ans, v.eos]
    } else {
        vec![PAR_THE, PAR_VALUE, PAR_IS, ans, v.eos]
    }
}

/// Check a response against the generating grammar for its prompt; used as
/// the validity oracle in tests and diagnostics.
pub fn response_matches_grammar(task: TaskKind, prompt: &[u32], response: &[u32]) -> bool {
    match task {
        TaskKind::Addition => {
            if prompt.len() != 7 {
                return false;
            }
            let dig = |t: u32| t.checked_sub(ADD_DIGIT0).filter(|&d| d < 10);
            let (a1, a0, b1, b0) = match (dig(prompt[1]), dig(prompt[2]), dig(prompt[4]), dig(prompt[5])) {
                (Some(a1), Some(a0), Some(b1), Some(b0)) => (a1, a0, b1, b0),
                _ => return false,
            };
            let v = addition_vocab();
            let expect = addition_pair(&v, a1 * 10 + a0, b1 * 10 + b0);
            response == expect.response
        }
        TaskKind::Paraphrase => {
            if prompt.len() != 7 {
                return false;
            }
            let slot = match prompt[2].checked_sub(PAR_POS0) {
                Some(s) if s < 3 => s,
                _ => return false,
            };
            let ans = prompt[3 + slot as usize];
            let eos = 1u32;
            let a = &[PAR_ANS, PAR_IS, ans, eos];
            let b = &[PAR_IT, PAR_EQUALS, ans, eos];
            let c = &[PAR_THE, PAR_VALUE, PAR_IS, ans, eos][..];
            response == a || response == b || response == c
        }
    }
}

/// Generate a corpus of `n` training pairs (plus a ⌈n/4⌉ test split) for a
/// built-in task. Deterministic for a given seed.
pub fn gen_corpus(task: TaskKind, n: usize, seed: u64) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::config("corpus size must be >= 1"));
    }
    let n_test = n.div_ceil(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (vocab, keys): (Vocabulary, Vec<u64>) = match task {
        TaskKind::Addition => {
            let keys: Vec<u64> = (0..100u64)
                .flat_map(|a| (0..100u64).map(move |b| a * 100 + b))
                .collect();
            (addition_vocab(), keys)
        }
        TaskKind::Paraphrase => {
            let keys: Vec<u64> = (0..3u64)
                .flat_map(|k| (0..1000u64).map(move |v| k * 1000 + v))
                .collect();
            (paraphrase_vocab(), keys)
        }
    };
    if n + n_test > keys.len() {
        return Err(Error::config(format!(
            "{} pairs requested but the prompt space only has {} entries",
            n + n_test,
            keys.len()
        )));
    }
    let mut shuffled = keys;
    shuffled.shuffle(&mut rng);

    let build = |key: u64, rng: &mut ChaCha8Rng| -> CorpusPair {
        match task {
            TaskKind::Addition => addition_pair(&vocab, (key / 100) as u32, (key % 100) as u32),
            TaskKind::Paraphrase => {
                let slot = (key / 1000) as u32;
                let rest = key % 1000;
                let vals = [
                    (rest / 100) as u32,
                    ((rest / 10) % 10) as u32,
                    (rest % 10) as u32,
                ];
                let prompt = paraphrase_prompt(&vocab, slot, vals);
                let response = paraphrase_response(&vocab, vals[slot as usize], rng);
                CorpusPair { prompt, response }
            }
        }
    };

    let train: Vec<CorpusPair> = shuffled[..n].iter().map(|&k| build(k, &mut rng)).collect();
    let test: Vec<CorpusPair> = shuffled[n..n + n_test]
        .iter()
        .map(|&k| build(k, &mut rng))
        .collect();
    for p in train.iter().chain(&test) {
        p.validate(task.context_len(), vocab.eos)?;
    }
    Ok(Corpus {
        task,
        vocab,
        train,
        test,
        seed,
    })
}

/// Sample a corpus of teacher-generated responses for the given prompts,
/// for sequence-level distillation. Deterministic for a given seed; a
/// response that never emits EOS is closed with one.
pub fn teacher_generate_corpus(
    teacher: &StudentModel,
    prompts: &[Vec<u32>],
    tau: f64,
    seed: u64,
    max_new: usize,
    eos: u32,
) -> Result<Vec<CorpusPair>> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(prompts.len());
    for prompt in prompts {
        if prompt.len() + 1 > teacher.config().context_len {
            return Err(Error::invalid_input(format!(
                "prompt of length {} leaves no room to generate in context {}",
                prompt.len(),
                teacher.config().context_len
            )));
        }
        let sample_seed: u64 = master.random();
        let mut response = teacher.sample_sequence(prompt, tau, max_new, eos, sample_seed)?;
        if response.last() != Some(&eos) {
            let room = teacher.config().context_len - prompt.len();
            if response.len() < room {
                response.push(eos);
            } else if let Some(last) = response.last_mut() {
                *last = eos;
            } else {
                response.push(eos);
            }
        }
        out.push(CorpusPair {
            prompt: prompt.clone(),
            response,
        });
    }
    Ok(out)
}

// ── corpus persistence ────────────────────────────────────────────────────
//
// A corpus directory holds vocab.json, meta.json, train.jsonl, test.jsonl.

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    task: TaskKind,
    seed: u64,
    n_train: usize,
    n_test: usize,
    context_len: usize,
}

fn pairs_to_jsonl(pairs: &[CorpusPair]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in pairs {
        out.extend_from_slice(serde_json::to_string(p).expect("serialize pair").as_bytes());
        out.push(b'\n');
    }
    out
}

fn pairs_from_jsonl(path: &Path) -> Result<Vec<CorpusPair>> {
    let file = std::fs::File::open(path)?;
    let mut pairs = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: CorpusPair = serde_json::from_str(&line)
            .map_err(|e| Error::text_format(i + 1, "pair", e.to_string()))?;
        pairs.push(p);
    }
    Ok(pairs)
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = CorpusMeta {
        task: corpus.task,
        seed: corpus.seed,
        n_train: corpus.train.len(),
        n_test: corpus.test.len(),
        context_len: corpus.task.context_len(),
    };
    atomic_write(
        &dir.join("vocab.json"),
        serde_json::to_string_pretty(&corpus.vocab)
            .expect("serialize vocab")
            .as_bytes(),
    )?;
    atomic_write(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)
            .expect("serialize meta")
            .as_bytes(),
    )?;
    atomic_write(&dir.join("train.jsonl"), &pairs_to_jsonl(&corpus.train))?;
    atomic_write(&dir.join("test.jsonl"), &pairs_to_jsonl(&corpus.test))?;
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let vocab: Vocabulary = serde_json::from_str(&std::fs::read_to_string(dir.join("vocab.json"))?)
        .map_err(|e| Error::config(format!("vocab.json: {e}")))?;
    vocab.validate()?;
    let meta: CorpusMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| Error::config(format!("meta.json: {e}")))?;
    let train = pairs_from_jsonl(&dir.join("train.jsonl"))?;
    let test = pairs_from_jsonl(&dir.join("test.jsonl"))?;
    for p in train.iter().chain(&test) {
        p.validate(meta.context_len, vocab.eos)?;
    }
    Ok(Corpus {
        task: meta.task,
        vocab,
        train,
        test,
        seed: meta.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn addition_corpus_is_deterministic() {
        let a = gen_corpus(TaskKind::Addition, 1000, 7).unwrap();
        let b = gen_corpus(TaskKind::Addition, 1000, 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = gen_corpus(TaskKind::Addition, 1000, 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn splits_are_prompt_disjoint() {
        for task in [TaskKind::Addition, TaskKind::Paraphrase] {
            let c = gen_corpus(task, 400, 3).unwrap();
            let train: HashSet<&Vec<u32>> = c.train.iter().map(|p| &p.prompt).collect();
            assert!(c.test.iter().all(|p| !train.contains(&p.prompt)));
            assert_eq!(c.test.len(), 100);
        }
    }

    #[test]
    fn every_generated_response_parses_under_the_grammar() {
        for task in [TaskKind::Addition, TaskKind::Paraphrase] {
            let c = gen_corpus(task, 500, 11).unwrap();
            for p in c.train.iter().chain(&c.test) {
                assert!(
                    response_matches_grammar(task, &p.prompt, &p.response),
                    "invalid response for task {task:?}: {:?} -> {:?}",
                    p.prompt,
                    p.response
                );
            }
        }
    }

    #[test]
    fn paraphrase_uses_multiple_phrasings() {
        let c = gen_corpus(TaskKind::Paraphrase, 300, 5).unwrap();
        let first_tokens: HashSet<u32> = c.train.iter().map(|p| p.response[0]).collect();
        assert!(first_tokens.len() >= 2, "only {first_tokens:?}");
    }

    #[test]
    fn addition_answers_are_units_digits() {
        let v = addition_vocab();
        let p = addition_pair(&v, 47, 85);
        // 47 + 85 = 132: units 2, carry 1, tens 3, carry 1, digits 1 3 2.
        let d = |x: u32| ADD_DIGIT0 + x;
        assert_eq!(
            p.response,
            vec![d(2), ADD_CARRY1, d(3), ADD_CARRY1, d(1), d(3), d(2), v.eos]
        );
        assert_eq!(p.answer(), Some(d(2)));
    }

    #[test]
    fn oversized_request_is_rejected() {
        assert!(gen_corpus(TaskKind::Paraphrase, 2900, 0).is_err());
        assert!(gen_corpus(TaskKind::Addition, 0, 0).is_err());
    }

    #[test]
    fn corpus_roundtrips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let c = gen_corpus(TaskKind::Paraphrase, 50, 9).unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let back = load_corpus(dir.path()).unwrap();
        assert_eq!(back.train, c.train);
        assert_eq!(back.test, c.test);
        assert_eq!(back.vocab, c.vocab);
        assert_eq!(back.task, c.task);
    }
}
