//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use memrec::corpus::{build_corpus, CorpusConfig, DocKind, MemoryDocument};
use memrec::dataset::synthetic::{generate, SyntheticSpec};
use memrec::dataset::{filter_min_history, ingest_interactions, split_and_subsample, SplitConfig};
use memrec::embedding::{Embedder, HashEmbedder};
use memrec::episode::{
    parse_segments, render_prompt, render_segments, run_episode, EpisodeConfig, ScriptedPolicy, SegmentKind,
    TaggedSegment, Termination,
};
use memrec::grounding::{ground, reward, Candidate, CandidateList, RewardConfig, TitleIndex};
use memrec::grpo::toy::ToyEnvSpec;
use memrec::grpo::{group_advantages, kl_categorical, objective, train_toy, GrpoConfig, LossTerm, SoftmaxTable};
use memrec::metrics::{case_ndcg, hit_ratio, ndcg};
use memrec::pipeline::{behavior_stats, BehaviorSample};
use memrec::episode::Decision;
use memrec::{AblationFlags, DatasetProfile, FlatIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const WORDS: [&str; 40] = [
    "river", "stone", "harbor", "signal", "garden", "lantern", "orchard", "voyage", "mirror", "empire", "silent",
    "crimson", "hidden", "broken", "golden", "distant", "hollow", "frozen", "burning", "gentle", "iron", "paper",
    "user", "history", "movie", "name", "director", "genre", "drama", "comedy", "thriller", "western", "book",
    "author", "series", "album", "brand", "price", "rank", "night",
];

fn random_text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let embedder = Arc::new(HashEmbedder::new(256));
    let mut checked = 0usize;
    for corpus in 0..200 {
        let n = rng.random_range(1..=2000);
        let mut texts: Vec<String> = Vec::with_capacity(n);
        for _ in 0..n {
            if !texts.is_empty() && rng.random_bool(0.1) {
                let j = rng.random_range(0..texts.len());
                texts.push(texts[j].clone());
            } else {
                texts.push(random_text(&mut rng, 10));
            }
        }
        let docs: Vec<MemoryDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| MemoryDocument {
                doc_id: i,
                kind: if i % 2 == 0 { DocKind::Collaborative } else { DocKind::Meta },
                source_ref: format!("r{i}"),
                text: t.clone(),
            })
            .collect();
        let index = FlatIndex::build(docs, embedder.clone()).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = texts.iter().map(|t| embedder.embed(t).unwrap().values().to_vec()).collect();
        for qn in 0..50 {
            let query = match qn % 10 {
                0 => String::new(),
                1 => texts[rng.random_range(0..n)].clone(),
                _ => random_text(&mut rng, 6),
            };
            let k = rng.random_range(1..=n + 5);
            let got = index.search(&query, k).map_err(|e| e.to_string())?;
            let qv = embedder.embed(&query).unwrap();
            let mut want: Vec<(usize, f64)> = rows
                .iter()
                .enumerate()
                .map(|(id, r)| {
                    let s = if qv.is_empty() {
                        0.0
                    } else {
                        qv.values().iter().zip(r).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
                    };
                    (id, s)
                })
                .collect();
            want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            want.truncate(k);
            ensure!(got.len() == want.len(), "corpus {corpus} query {qn}: {} hits, expected {}", got.len(), want.len());
            for (h, (id, s)) in got.iter().zip(&want) {
                ensure!(h.doc_id == *id && h.score == *s, "corpus {corpus} query {qn}: got ({}, {}) expected ({id}, {s})", h.doc_id, h.score);
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{checked} queries over 200 corpora match brute force in {:.1}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- criterion 2

fn candidates_with_truth_at(rank: usize, len: usize) -> CandidateList {
    CandidateList {
        items: (1..=len)
            .map(|r| Candidate {
                item_id: if r == rank { "gt".into() } else { format!("x{r}") },
                score: 1.0 - r as f64 * 1e-3,
            })
            .collect(),
    }
}

fn criterion_2() -> Outcome {
    let cfg = RewardConfig::default();
    ensure!(cfg.cutoffs == [1, 5, 10, 50, 100], "cutoffs {:?}", cfg.cutoffs);
    ensure!(cfg.weights == [0.5, 0.3, 0.1, 0.08, 0.02], "weights {:?}", cfg.weights);
    ensure!(cfg.lambda == 1.0, "lambda {}", cfg.lambda);
    let (w1, w5, w10, w50, w100, l) = (0.5, 0.3, 0.1, 0.08, 0.02, 1.0);
    // band -> (representative ranks, hand-summed weights of every cutoff the rank clears)
    let bands: [(&str, &[usize], f64, f64); 6] = [
        ("1", &[1], w100 + w50 + w10 + w5 + w1, 1.0),
        ("2-5", &[2, 3, 5], w100 + w50 + w10 + w5, 0.5),
        ("6-10", &[6, 8, 10], w100 + w50 + w10, 0.2),
        ("11-50", &[11, 30, 50], w100 + w50, 0.1),
        ("51-100", &[51, 77, 100], w100, 0.02),
        (">100", &[101, 150], 0.0, 0.0),
    ];
    let mut table = Vec::new();
    for (band, ranks, hand, decimal) in bands {
        ensure!((hand - decimal).abs() < 1e-15, "band {band}: hand sum {hand} vs {decimal}");
        for &rank in ranks {
            let list = candidates_with_truth_at(rank, 150);
            for parse_ok in [true, false] {
                let got = reward(&list, "gt", parse_ok, &cfg);
                let want = if parse_ok { hand } else { hand - l };
                ensure!(got.total == want, "band {band} rank {rank} parse_ok {parse_ok}: {} != {want}", got.total);
            }
        }
        table.push(format!("{band}:{hand}"));
    }
    let absent = reward(&candidates_with_truth_at(0, 100), "gt", true, &cfg);
    ensure!(absent.total == 0.0, "truth outside the list: {}", absent.total);

    // a failed parse yields no answer, hence no candidates and exactly -1
    let titles = TitleIndex::from_vectors(vec![("gt".into(), vec![1.0; 8])], Arc::new(HashEmbedder::new(8)))
        .map_err(|e| e.to_string())?;
    let empty = ground(None, &titles, 100).map_err(|e| e.to_string())?;
    let failed = reward(&empty, "gt", false, &cfg);
    ensure!(failed.total == -1.0, "parse failure total {}", failed.total);
    Ok(format!("bands {} ; parse failure -1", table.join(" ")))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for set in 0..1000 {
        let cases = rng.random_range(1..200);
        let n = rng.random_range(1..=100);
        let ranks: Vec<Option<usize>> = (0..cases)
            .map(|_| if rng.random_bool(0.2) { None } else { Some(rng.random_range(1..=150)) })
            .collect();
        // brute force: materialize each ranked list and scan its first n slots
        let (mut hits, mut gain) = (0.0, 0.0);
        for r in &ranks {
            let list: Vec<bool> = (1..=150).map(|pos| Some(pos) == *r).collect();
            let mut dcg = 0.0;
            let mut hit = false;
            for (i, rel) in list.iter().take(n).enumerate() {
                if *rel {
                    hit = true;
                    dcg += 1.0 / ((i + 2) as f64).log2();
                }
            }
            let idcg = 1.0 / 2f64.log2();
            hits += hit as u8 as f64;
            gain += dcg / idcg;
        }
        let (hr_want, ndcg_want) = (hits / cases as f64, gain / cases as f64);
        let hr_got = hit_ratio(&ranks, n).map_err(|e| e.to_string())?;
        let ndcg_got = ndcg(&ranks, n).map_err(|e| e.to_string())?;
        let err = (hr_got - hr_want).abs().max((ndcg_got - ndcg_want).abs());
        worst = worst.max(err);
        ensure!(err <= 1e-12, "set {set}: HR {hr_got} vs {hr_want}, NDCG {ndcg_got} vs {ndcg_want}");
    }
    let single = case_ndcg(Some(3), 5);
    ensure!(single == 0.5, "NDCG(rank 3, N=5) = {single}");
    ensure!(ndcg(&[Some(3)], 5).map_err(|e| e.to_string())? == 0.5, "aggregate NDCG of one rank-3 case");
    Ok(format!("1000 sets, max error {worst:.1e}; NDCG(3,5) = 0.5"))
}

// ---------------------------------------------------------------- criterion 4

fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Independent evaluation of the clipped KL-regularized objective at temperature 1.
fn oracle_loss(logits: &[f64], reference: &[f64], n_actions: usize, terms: &[LossTerm], eps: f64, beta: f64) -> f64 {
    let mut total = 0.0;
    for term in terms {
        let mut sum = 0.0;
        for d in &term.decisions {
            let p = oracle_softmax(&logits[d.state * n_actions..(d.state + 1) * n_actions]);
            let q = oracle_softmax(&reference[d.state * n_actions..(d.state + 1) * n_actions]);
            let r = (p[d.action].ln() - d.logprob).exp();
            let unclipped = r * term.advantage;
            let clipped = r.max(1.0 - eps).min(1.0 + eps) * term.advantage;
            let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
            sum += unclipped.min(clipped) - beta * kl;
        }
        // template tokens: ratio 1, no divergence
        sum += (term.generated_tokens - term.decisions.len()) as f64 * term.advantage;
        total += sum / term.generated_tokens as f64;
    }
    total / terms.len() as f64
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let levels = [1.0, 0.5, 0.2, 0.1, 0.02, 0.0, -1.0];
    let mut groups = 0;
    for _ in 0..2000 {
        let g = rng.random_range(2..=16);
        let rewards: Vec<f64> = (0..g)
            .map(|_| if rng.random_bool(0.5) { levels[rng.random_range(0..levels.len())] } else { rng.random_range(-1.0..1.0) })
            .collect();
        let mean = rewards.iter().sum::<f64>() / g as f64;
        let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64).sqrt();
        let a = group_advantages(&rewards, 1e-8);
        let am = a.iter().sum::<f64>() / g as f64;
        let av = a.iter().map(|x| (x - am).powi(2)).sum::<f64>() / g as f64;
        if std > 1e-8 {
            ensure!(am.abs() < 1e-9, "advantage mean {am}");
            ensure!((av - 1.0).abs() < 1e-6, "advantage variance {av}");
            groups += 1;
        } else {
            ensure!(a.iter().all(|x| *x == 0.0), "constant group gave {a:?}");
        }
    }

    let (n_states, n_actions) = (6, 5);
    let mut worst = 0.0f64;
    for batch in 0..20 {
        let beta = if batch % 2 == 0 { 0.001 } else { 0.2 };
        let cfg = GrpoConfig { kl_coeff: beta, ..GrpoConfig::default() };
        let rand_logits = |rng: &mut ChaCha8Rng| (0..n_states * n_actions).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<_>>();
        let old = SoftmaxTable::from_logits(n_states, n_actions, rand_logits(&mut rng)).unwrap();
        let reference = SoftmaxTable::from_logits(n_states, n_actions, rand_logits(&mut rng)).unwrap();
        let mut logits = old.logits.clone();
        for v in &mut logits {
            *v += rng.random_range(-0.4..0.4);
        }
        let policy = SoftmaxTable::from_logits(n_states, n_actions, logits.clone()).unwrap();
        let mut terms = Vec::new();
        while terms.len() < 16 {
            let k = rng.random_range(1..6);
            let mut decisions = Vec::new();
            let mut near_kink = false;
            for _ in 0..k {
                let state = rng.random_range(0..n_states);
                let (action, logprob) = old.sample(state, 1.0, &mut rng);
                let r = (policy.log_prob(state, action, 1.0) - logprob).exp();
                near_kink |= (r - 0.8).abs() < 1e-4 || (r - 1.2).abs() < 1e-4;
                decisions.push(Decision { state, action, logprob });
            }
            if near_kink {
                continue;
            }
            terms.push(LossTerm { decisions, generated_tokens: k + rng.random_range(0..8), advantage: rng.random_range(-2.0..2.0) });
        }
        let eval = objective(&policy, &reference, &terms, &cfg).map_err(|e| e.to_string())?;
        let oracle_value = oracle_loss(&logits, &reference.logits, n_actions, &terms, 0.2, beta);
        ensure!((eval.value - oracle_value).abs() < 1e-12, "batch {batch}: value {} vs oracle {oracle_value}", eval.value);
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += h;
            let mut minus = logits.clone();
            minus[i] -= h;
            let fd = (oracle_loss(&plus, &reference.logits, n_actions, &terms, 0.2, beta)
                - oracle_loss(&minus, &reference.logits, n_actions, &terms, 0.2, beta))
                / (2.0 * h);
            let g = eval.grad[i];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-4);
            worst = worst.max(rel);
            ensure!(rel <= 1e-4, "batch {batch} param {i}: analytic {g} vs finite difference {fd}");
        }
    }

    let mut min_kl = f64::INFINITY;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=12);
        let mut draw = |sparse: bool| {
            let raw: Vec<f64> = (0..n)
                .map(|_| if sparse && rng.random_bool(0.3) { 0.0 } else { rng.random_range(1e-12..1.0f64).powi(rng.random_range(1..4)) })
                .collect();
            let s: f64 = raw.iter().sum();
            if s == 0.0 {
                vec![1.0 / n as f64; n]
            } else {
                raw.iter().map(|v| v / s).collect::<Vec<_>>()
            }
        };
        let p = draw(true);
        let q = draw(false);
        let kl = kl_categorical(&p, &q).map_err(|e| e.to_string())?;
        ensure!(kl >= 0.0 && kl.is_finite(), "KL {kl} for {p:?} / {q:?}");
        min_kl = min_kl.min(kl);
        ensure!(kl_categorical(&p, &p).unwrap().abs() < 1e-12, "KL(p||p) nonzero");
    }
    Ok(format!(
        "{groups} standardized groups; 20 batches x 30 params, max relative error {worst:.1e}; 10000 KL pairs, min {min_kl:.1e}"
    ))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = GrpoConfig::default();
    ensure!(cfg.group_size == 8 && cfg.clip_eps == 0.2 && cfg.kl_coeff == 0.001, "config {cfg:?}");
    ensure!(cfg.temperature == 1.0 && cfg.max_turns == 5 && cfg.steps == 2000, "config {cfg:?}");
    let spec = ToyEnvSpec::default();
    ensure!(spec.n_users == 100 && spec.n_items == 50 && spec.pattern_fraction == 0.5, "toy spec {spec:?}");
    let log = train_toy(&spec, &cfg, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let evals: Vec<_> = log.evals().collect();
    let first = evals.first().ok_or("no evaluations")?;
    let last = evals.last().ok_or("no evaluations")?;
    ensure!(last.step <= 2000, "final eval at step {}", last.step);
    let samples: Vec<BehaviorSample> = log
        .rollouts
        .iter()
        .map(|r| BehaviorSample { step: r.step, retrieval_calls: r.retrieval_calls, generated_tokens: r.generated_tokens })
        .collect();
    let windows = behavior_stats(&samples, 200).map_err(|e| e.to_string())?;
    let early = windows.first().ok_or("no windows")?;
    let late = windows.last().ok_or("no windows")?;
    let summary = format!(
        "reward {:.3} -> {:.3}, answerable retrieval rate {:.3} -> {:.3}, calls/episode window {} {:.2} -> window {} {:.2}, {:.1}s",
        first.mean_reward,
        last.mean_reward,
        first.retrieval_rate_answerable,
        last.retrieval_rate_answerable,
        early.window,
        early.avg_retrieval_calls,
        late.window,
        late.avg_retrieval_calls,
        elapsed.as_secs_f64()
    );
    ensure!(last.mean_reward >= 0.8, "{summary}");
    ensure!(last.retrieval_rate_answerable < 0.2, "{summary}");
    ensure!(late.avg_retrieval_calls < early.avg_retrieval_calls, "{summary}");
    ensure!(elapsed < Duration::from_secs(300), "{summary}");
    Ok(summary)
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut pooled = 0usize;
    for build in 0..50 {
        let data = generate(&SyntheticSpec {
            n_users: rng.random_range(150..500),
            n_items: rng.random_range(40..150),
            min_len: rng.random_range(8..14),
            max_len: rng.random_range(14..30),
            skip_prob: rng.random_range(0.0..0.5),
            seed: rng.random(),
        });
        let ingested = ingest_interactions(data.interactions, data.items).map_err(|e| e.to_string())?;
        let histories = filter_min_history(ingested.histories, 10);
        let guard = build % 5 != 4;
        let cap = if build % 3 == 0 { Some(rng.random_range(10..500)) } else { None };
        let cfg = SplitConfig::new(rng.random())
            .with_sizes(rng.random_range(20..300), rng.random_range(5..60), rng.random_range(5..80))
            .with_memory_cap(cap)
            .with_look_ahead_guard(guard);
        let bundle = split_and_subsample(&histories, &cfg).map_err(|e| e.to_string())?;
        let used: HashSet<(String, String, i64)> = bundle
            .train
            .iter()
            .chain(&bundle.validation)
            .chain(&bundle.test)
            .flat_map(|e| e.prefix.iter().chain(std::iter::once(&e.target)))
            .map(|r| (r.user_id.clone(), r.item_id.clone(), r.timestamp))
            .collect();
        let overlap = bundle
            .memory_pool
            .iter()
            .filter(|r| used.contains(&(r.user_id.clone(), r.item_id.clone(), r.timestamp)))
            .count();
        ensure!(overlap == 0, "build {build}: {overlap} memory records reused by split examples");
        if guard {
            if let Some(earliest) = bundle.test.iter().map(|e| e.target.timestamp).min() {
                let late = bundle.memory_pool.iter().filter(|r| r.timestamp > earliest).count();
                ensure!(late == 0, "build {build}: {late} memory records after the earliest test target {earliest}");
            }
        }
        if let Some(c) = cap {
            ensure!(bundle.memory_pool.len() <= c, "build {build}: pool {} above cap {c}", bundle.memory_pool.len());
        }
        pooled += bundle.memory_pool.len();
    }
    ensure!(pooled > 0, "every memory pool was empty, nothing was checked");
    Ok(format!("50 builds, {pooled} memory records checked, no overlap or look-ahead"))
}

// ---------------------------------------------------------------- criterion 7

fn random_segments(rng: &mut ChaCha8Rng) -> Vec<TaggedSegment> {
    let n = rng.random_range(0..8);
    (0..n)
        .map(|_| {
            let kind = SegmentKind::TAGGED[rng.random_range(0..4)];
            let mut body = random_text(rng, 8);
            if kind == SegmentKind::Answer && rng.random_bool(0.7) {
                body = format!("\"{body}\"");
            }
            TaggedSegment { kind, body, token_span: (0, 0) }
        })
        .collect()
}

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let fragments = ["<", ">", "</", "<think>", "</answer>", "<tool_call>", "</tool_response>", "\"", "\u{201c}", "é", "  "];
    for _ in 0..rng.random_range(1..6) {
        match rng.random_range(0..3) {
            0 if !chars.is_empty() => {
                let i = rng.random_range(0..chars.len());
                chars.remove(i);
            }
            1 if !chars.is_empty() => {
                let i = rng.random_range(0..chars.len());
                let j = (i + rng.random_range(1..10)).min(chars.len());
                chars.drain(i..j);
            }
            _ => {
                let i = rng.random_range(0..=chars.len());
                let f: Vec<char> = fragments[rng.random_range(0..fragments.len())].chars().collect();
                chars.splice(i..i, f);
            }
        }
    }
    chars.into_iter().collect()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut round_trips = 0;
    for i in 0..10_000 {
        let segs = random_segments(&mut rng);
        let text = render_segments(&segs);
        let input = if i % 2 == 0 { text.clone() } else { mutate(&mut rng, &text) };
        let parsed = catch_unwind(|| parse_segments(&input)).map_err(|_| format!("parser panicked on {input:?}"))?;
        if i % 2 == 0 {
            ensure!(parsed.len() == segs.len(), "round trip lost segments for {input:?}");
            for (a, b) in parsed.iter().zip(&segs) {
                ensure!(a.kind == b.kind && a.body == b.body, "round trip changed {b:?} into {a:?}");
            }
            round_trips += 1;
        }
    }

    let docs = vec![MemoryDocument { doc_id: 0, kind: DocKind::Meta, source_ref: "i".into(), text: "Movie Name: river stone".into() }];
    let index = FlatIndex::build(docs, Arc::new(HashEmbedder::new(64))).map_err(|e| e.to_string())?;
    let prompt = render_prompt(&["river".into()], &DatasetProfile::movielens(), AblationFlags::default()).map_err(|e| e.to_string())?;
    let mut max_calls = 0;
    for i in 0..2_000 {
        let budget = rng.random_range(1..200);
        let script: Vec<String> = (0..rng.random_range(0..12))
            .map(|_| match rng.random_range(0..6) {
                0 => format!("<tool_call> {} </tool_call>", random_text(&mut rng, 4)),
                1 => format!("<think> {} </think> <tool_call> {} </tool_call>", random_text(&mut rng, 20), random_text(&mut rng, 3)),
                2 => format!("<think> {} </think>", random_text(&mut rng, 30)),
                3 => format!("<answer> \"{}\" </answer>", random_text(&mut rng, 3)),
                4 => {
                    let call = format!("<tool_call> {} </tool_call>", random_text(&mut rng, 3));
                    mutate(&mut rng, &call)
                }
                _ => random_text(&mut rng, 15),
            })
            .collect();
        let mut policy = ScriptedPolicy::new(script);
        let cfg = EpisodeConfig { max_turns: 5, token_budget: budget };
        let t = run_episode(&mut policy, &index, &prompt, &cfg).map_err(|e| format!("episode {i}: {e}"))?;
        ensure!(t.stats.retrieval_calls <= 5, "episode {i}: {} retrieval calls", t.stats.retrieval_calls);
        ensure!(t.stats.generated_tokens <= budget, "episode {i}: {} tokens over budget {budget}", t.stats.generated_tokens);
        ensure!(t.parse_ok == t.answer_text.is_some(), "episode {i}: parse_ok {} with answer {:?}", t.parse_ok, t.answer_text);
        max_calls = max_calls.max(t.stats.retrieval_calls);
    }
    let mut only_calls = ScriptedPolicy::new((0..20).map(|_| "<tool_call> river </tool_call>".to_string()));
    let t = run_episode(&mut only_calls, &index, &prompt, &EpisodeConfig::default()).map_err(|e| e.to_string())?;
    ensure!(t.stats.retrieval_calls == 5 && !t.parse_ok && t.termination == Termination::TurnLimit, "tool-call-only policy: {:?}", t.stats);
    Ok(format!("10000 transcripts parsed, {round_trips} round trips, 2000 scripted episodes within limits (max {max_calls} calls)"))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let data = generate(&SyntheticSpec { n_users: 400, ..SyntheticSpec::default() });
    let ingested = ingest_interactions(data.interactions, data.items).map_err(|e| e.to_string())?;
    let histories = filter_min_history(ingested.histories, 10);
    let bundle = split_and_subsample(&histories, &SplitConfig::new(8).with_sizes(200, 30, 50)).map_err(|e| e.to_string())?;
    let titles = vec!["The Silent Harbor".to_string(), "The Iron Tower".to_string()];
    let mut notes = Vec::new();
    for profile in [DatasetProfile::movielens(), DatasetProfile::goodreads(), DatasetProfile::cds_vinyl()] {
        let count = |flags: AblationFlags| {
            let docs = build_corpus(&bundle, &ingested.catalog, &profile, flags, &CorpusConfig::default());
            let collab = docs.iter().filter(|d| d.kind == DocKind::Collaborative).count();
            (collab, docs.len() - collab)
        };
        let prompt = |flags: AblationFlags| render_prompt(&titles, &profile, flags).map(|p| p.text).map_err(|e| e.to_string());
        let full = AblationFlags::default();
        let no_cf = AblationFlags { without_cf: true, ..full };
        let no_meta = AblationFlags { without_meta: true, ..full };
        let no_re = AblationFlags { without_re: true, ..full };

        let (c, m) = count(full);
        ensure!(c > 0 && m == ingested.catalog.len(), "{}: full corpus has {c} collaborative, {m} meta", profile.name);
        ensure!(count(no_cf) == (0, m), "{}: without cf gives {:?}", profile.name, count(no_cf));
        ensure!(count(no_meta) == (c, 0), "{}: without meta gives {:?}", profile.name, count(no_meta));
        ensure!(count(no_re) == (c, m), "{}: without re changed the corpus", profile.name);

        let think = "You must conduct reasoning inside <think> and </think>";
        let analyze = "Begin by briefly analyzing";
        let (p_full, p_cf, p_meta, p_re) = (prompt(full)?, prompt(no_cf)?, prompt(no_meta)?, prompt(no_re)?);
        ensure!(p_full.contains(think) && p_full.contains(analyze), "{}: full prompt lacks the reasoning instruction", profile.name);
        ensure!(!p_re.contains(think) && !p_re.contains(analyze) && !p_re.contains("<think>"), "{}: without re prompt still asks for reasoning", profile.name);
        ensure!(p_full.contains("interaction histories") && !p_cf.contains("interaction histories"), "{}: cf scope wording", profile.name);
        ensure!(p_full.contains("metadata") && !p_meta.contains("metadata"), "{}: meta scope wording", profile.name);
        notes.push(format!("{} {c}/{m}", profile.name));
    }
    Ok(format!("collaborative/meta docs per profile: {}", notes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("retrieval oracle equivalence", criterion_1),
        ("reward table exactness", criterion_2),
        ("metric oracle", criterion_3),
        ("GRPO math", criterion_4),
        ("end-to-end toy training", criterion_5),
        ("leakage", criterion_6),
        ("protocol robustness", criterion_7),
        ("ablation wiring", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
