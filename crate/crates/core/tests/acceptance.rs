//! Acceptance run: one PASS / FAIL / NOT RUN line per criterion.
//!
//! Criteria 8 and 9 train full-size models and only run with
//! `HIERCHAR_EXTENDED=1`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::toy::{markov_lines, memorize_split, toy};
use hierchar::autodiff::{check_gradient_with, check_param_gradients, uniform, AutodiffError, ParamStore, Tape, Tensor, Var};
use hierchar::diagnostics::gate_bias;
use hierchar::encoders::{Cnn, LstmLayer, LstmState, SeqLstm, TreeLstm, TreeLstmConfig, Vocab};
use hierchar::ids::{
    binarize, load_rule_table, parse_rule_text, reconstruct_pre_order, GlyphTree, Idc, Leaf, LinearOrder, RawNode,
    RawOperator, RuleTable, SeqToken, DEFAULT_MAX_DEPTH,
};
use hierchar::lm::{eval_lm, EmbeddingCache, EmbeddingKind, LmConfig, LmModel, CharVocab};
use hierchar::phono::{
    build_scenario, parse_unihan_readings, parse_unihan_variants, segment_jyutping, strip_tone, Corpus, DatasetSplit,
    PronEntry, Scenario, VariantMap,
};
use hierchar::pron::{
    decompose_entries, evaluate, grid_search, train, train_with, EvalReport, Grid, Inventories, OutputOrder, Prediction,
    PronHead, PronModel, RunConfig, TrainOptions,
};

const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const GRAD_INSTANCES: u64 = 20;
/// Central differences are only meaningful away from a tie of the max.
const POOL_MARGIN: f64 = 1e-4;
const BATCH_TOL: f64 = 1e-9;
const CACHE_TOL: f64 = 1e-9;
const TER_BAND: (f64, f64) = (28.0, 35.0);
const GATE_MIN_PERCENT: f64 = 80.0;
const SPEEDUP_MIN: f64 = 3.0;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn judge(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn rand_t(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor {
    uniform(&[r, c], 1.0, rng)
}

fn randomize_biases(s: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for id in s.ids().collect::<Vec<_>>() {
        if s.name(id).ends_with(".b") {
            let v = uniform(s.get(id).shape(), 0.5, rng);
            s.set(id, v).unwrap();
        }
    }
}

/// `sum(a ⊙ ra) + sum(b ⊙ rb)`, a generic scalar read-out of two states.
fn readout(t: &mut Tape, a: Var, ra: &Tensor, b: Option<(Var, &Tensor)>) -> Result<Var, AutodiffError> {
    let rv = t.constant(ra.clone());
    let m = t.mul(a, rv)?;
    let mut l = t.sum(m);
    if let Some((b, rb)) = b {
        let rv = t.constant(rb.clone());
        let m = t.mul(b, rv)?;
        let s = t.sum(m);
        l = t.add(l, s)?;
    }
    Ok(l)
}

const GLYPHS: &str = "一丨丿丶乙人十口木水火土日月女子";

fn toks(rng: &mut ChaCha8Rng, n: usize) -> Vec<SeqToken> {
    let g: Vec<char> = GLYPHS.chars().collect();
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                SeqToken::Op(Idc::ALL[rng.gen_range(0..Idc::ALL.len())])
            } else {
                SeqToken::Leaf(Leaf::Char(g[rng.gen_range(0..g.len())]))
            }
        })
        .collect()
}

/// Smallest gap, over every pooled unit, between the winning response and
/// the best response of a window with different content. Windows with equal
/// content tie exactly and move together, so they are not kinks.
fn pool_margin(s: &ParamStore, cnn: &Cnn, seqs: &[Vec<SeqToken>]) -> f64 {
    let d = cnn.embeds.dim;
    let table = s.get(cnn.embeds.table);
    let mut margin = f64::INFINITY;
    for seq in seqs {
        let mut xs: Vec<Option<SeqToken>> = seq.iter().map(|&t| Some(t)).collect();
        while xs.len() < Cnn::MAX_WIDTH {
            xs.push(None);
        }
        for (w, &(k, b)) in (1..).zip(&cnn.banks) {
            let (k, b) = (s.get(k), s.get(b));
            for f in 0..cnn.filters {
                let mut resp: Vec<(f64, &[Option<SeqToken>])> = Vec::new();
                for p in 0..=xs.len() - w {
                    let win = &xs[p..p + w];
                    let mut v = b.get(0, f);
                    for (o, tok) in win.iter().enumerate() {
                        if let Some(t) = tok {
                            let row = table.row_slice(cnn.embeds.vocab.row(*t));
                            for j in 0..d {
                                v += row[j] * k.get(o * d + j, f);
                            }
                        }
                    }
                    resp.push((v, win));
                }
                resp.sort_by(|a, b| b.0.total_cmp(&a.0));
                let top = resp[0];
                if let Some(next) = resp.iter().find(|r| r.1 != top.1) {
                    margin = margin.min(top.0 - next.0);
                }
            }
        }
    }
    margin
}

fn c1_gradients() -> Outcome {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut redrawn = 0;
    let mut note = |k: &'static str, e: f64| {
        let w = worst.entry(k).or_insert(0.0);
        *w = w.max(e);
    };
    for seed in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        // tree node, all seven inputs and every parameter
        let (d, h) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let mut s = ParamStore::new();
        let cfg = TreeLstmConfig { input_dim: d, hidden: h, bias: true, use_operators: true };
        let enc = TreeLstm::new(&mut s, "t", Vocab::new(GLYPHS.chars()), cfg, &mut rng);
        randomize_biases(&mut s, &mut rng);
        let ins: Vec<Tensor> = [d, d, d, h, h, h, h].iter().map(|&n| rand_t(1, n, &mut rng)).collect();
        let (rh, rc) = (rand_t(1, h, &mut rng), rand_t(1, h, &mut rng));
        let node = |t: &mut Tape, vs: &[Var]| -> Result<Var, AutodiffError> {
            let st = enc.node(t, vs[0], vs[1], vs[2], vs[3], vs[4], vs[5], vs[6])?;
            readout(t, st.h, &rh, Some((st.c, &rc)))
        };
        let e = check_param_gradients(&mut s, GRAD_EPS, |t| {
            let vs: Vec<Var> = ins.iter().map(|x| t.constant(x.clone())).collect();
            node(t, &vs)
        })
        .unwrap();
        note("treeLSTM node", e);
        for k in 0..7 {
            let e = check_gradient_with(&s, &ins[k], GRAD_EPS, |t, x| {
                let vs: Vec<Var> = (0..7).map(|j| if j == k { x } else { t.constant(ins[j].clone()) }).collect();
                node(t, &vs)
            })
            .unwrap();
            note("treeLSTM node", e);
        }

        // LSTM cell with a previous state
        let (d, h) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let rows = rng.gen_range(1..=3);
        let mut s = ParamStore::new();
        let layer = LstmLayer::new(&mut s, "l", d, h, &mut rng);
        randomize_biases(&mut s, &mut rng);
        let (x, h0, c0) = (rand_t(rows, d, &mut rng), rand_t(rows, h, &mut rng), rand_t(rows, h, &mut rng));
        let (rh, rc) = (rand_t(rows, h, &mut rng), rand_t(rows, h, &mut rng));
        let cell = |t: &mut Tape, x: Var, h0: Var| -> Result<Var, AutodiffError> {
            let c = t.constant(c0.clone());
            let st = layer.cell(t, x, Some(LstmState { h: h0, c }))?;
            readout(t, st.h, &rh, Some((st.c, &rc)))
        };
        let e = check_param_gradients(&mut s, GRAD_EPS, |t| {
            let (xv, hv) = (t.constant(x.clone()), t.constant(h0.clone()));
            cell(t, xv, hv)
        })
        .unwrap();
        note("LSTM cell", e);
        let e = check_gradient_with(&s, &x, GRAD_EPS, |t, xv| {
            let hv = t.constant(h0.clone());
            cell(t, xv, hv)
        })
        .unwrap();
        note("LSTM cell", e);
        let e = check_gradient_with(&s, &h0, GRAD_EPS, |t, hv| {
            let xv = t.constant(x.clone());
            cell(t, xv, hv)
        })
        .unwrap();
        note("LSTM cell", e);

        // biLSTM over a ragged batch, 1 or 2 layers
        let (d, h) = (rng.gen_range(1..=8), rng.gen_range(1..=4));
        let layers = rng.gen_range(1..=2);
        let mut s = ParamStore::new();
        let enc = SeqLstm::new(&mut s, "b", Vocab::new(GLYPHS.chars()), d, h, layers, true, &mut rng);
        randomize_biases(&mut s, &mut rng);
        let n = rng.gen_range(1..=3);
        let seqs: Vec<Vec<SeqToken>> = (0..n).map(|_| {
            let len = rng.gen_range(1..=6);
            toks(&mut rng, len)
        }).collect();
        let r = rand_t(n, 2 * h, &mut rng);
        let e = check_param_gradients(&mut s, GRAD_EPS, |t| {
            let out = enc.encode(t, &seqs, None)?;
            readout(t, out.embedding, &r, None)
        })
        .unwrap();
        note("biLSTM", e);

        // CNN bank with max pooling and the projection; instances sitting on a
        // kink of the max are redrawn
        let (cnn, mut s, seqs) = loop {
            let (d, f, o) = (rng.gen_range(1..=8), rng.gen_range(1..=4), rng.gen_range(1..=8));
            let mut s = ParamStore::new();
            let cnn = Cnn::new(&mut s, "c", Vocab::new(GLYPHS.chars()), d, f, o, &mut rng);
            randomize_biases(&mut s, &mut rng);
            let n = rng.gen_range(1..=3);
            let seqs: Vec<Vec<SeqToken>> = (0..n)
                .map(|_| {
                    let len = rng.gen_range(1..=10);
                    toks(&mut rng, len)
                })
                .collect();
            if pool_margin(&s, &cnn, &seqs) > POOL_MARGIN {
                break (cnn, s, seqs);
            }
            redrawn += 1;
        };
        let r = rand_t(seqs.len(), cnn.output_dim, &mut rng);
        let e = check_param_gradients(&mut s, GRAD_EPS, |t| {
            let out = cnn.encode(t, &seqs, None)?;
            readout(t, out, &r, None)
        })
        .unwrap();
        note("CNN", e);

        // chained head under its own loss
        let h = rng.gen_range(1..=8);
        let sizes = [rng.gen_range(2..=8), rng.gen_range(2..=8), rng.gen_range(2..=8)];
        let entries: Vec<PronEntry> = (0..8)
            .map(|i| PronEntry {
                ch: char::from_u32(0x4E00 + i).unwrap(),
                onset: format!("o{}", i as usize % sizes[0]),
                nucleus: format!("n{}", i as usize % sizes[1]),
                coda: format!("c{}", i as usize % sizes[2]),
            })
            .collect();
        let inv = Inventories::from_entries(&entries);
        let order = if seed % 2 == 0 { OutputOrder::CodaFirst } else { OutputOrder::OnsetFirst };
        let mut s = ParamStore::new();
        let head = PronHead::new(&mut s, h, &inv, order, true, &mut rng);
        randomize_biases(&mut s, &mut rng);
        let rows = rng.gen_range(1..=4);
        let hin = rand_t(rows, h, &mut rng);
        let targets = [0, 1, 2].map(|k| (0..rows).map(|_| rng.gen_range(0..head.sizes[k])).collect::<Vec<_>>());
        let e = check_param_gradients(&mut s, GRAD_EPS, |t| {
            let hv = t.constant(hin.clone());
            let out = head.predict(t, hv)?;
            head.loss(t, &out, &targets)
        })
        .unwrap();
        note("head", e);
        let e = check_gradient_with(&s, &hin, GRAD_EPS, |t, hv| {
            let out = head.predict(t, hv)?;
            head.loss(t, &out, &targets)
        })
        .unwrap();
        note("head", e);
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    judge(
        max < GRAD_TOL,
        format!(
            "{GRAD_INSTANCES} instances each, max rel err {max:.1e} < {GRAD_TOL:.0e} ({detail}); \
             {redrawn} CNN draws with a pooling margin under {POOL_MARGIN:.0e} redrawn"
        ),
    )
}

fn random_tree(depth: usize, rng: &mut ChaCha8Rng) -> GlyphTree {
    let g: Vec<char> = "一丨丿丶乙人十口木水火土日月女子龘".chars().collect();
    if depth == 0 {
        return GlyphTree::leaf(g[rng.gen_range(0..g.len())]);
    }
    let other = rng.gen_range(0..depth);
    let (l, r) = if rng.gen_bool(0.5) { (depth - 1, other) } else { (other, depth - 1) };
    let idc = Idc::ALL[rng.gen_range(0..Idc::ALL.len())];
    GlyphTree::op(idc, random_tree(l, rng), random_tree(r, rng))
}

fn batched_vs_sequential(enc: &TreeLstm, s: &ParamStore, trees: &[GlyphTree]) -> f64 {
    let mut t = Tape::new(s);
    let refs: Vec<&GlyphTree> = trees.iter().collect();
    let batch = enc.batch_forward(&mut t, &refs, None).unwrap();
    let roots = t.value(batch.roots).clone();
    let mut worst: f64 = 0.0;
    for (b, tree) in trees.iter().enumerate() {
        let mut t1 = Tape::new(s);
        let f = enc.forward(&mut t1, tree).unwrap();
        let one = t1.value(f.root().h);
        let row = Tensor::row(roots.row_slice(b).to_vec());
        worst = worst.max(one.max_abs_diff(&row));
    }
    worst
}

fn c2_batching(rules: Option<&RuleTable>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = ParamStore::new();
    let cfg = TreeLstmConfig { input_dim: 8, hidden: 8, bias: true, use_operators: true };
    let enc = TreeLstm::new(&mut s, "t", Vocab::new("一丨丿丶乙人十口木水火土".chars()), cfg, &mut rng);
    randomize_biases(&mut s, &mut rng);
    let synth: Vec<GlyphTree> = (0..50).map(|i| random_tree(1 + i % 8, &mut rng)).collect();
    let e_synth = batched_vs_sequential(&enc, &s, &synth);
    let Some(rules) = rules else {
        return Outcome::NotRun(format!("50 random trees max diff {e_synth:.1e}; ids.txt absent, real trees skipped"));
    };
    let mut cps: Vec<char> = rules.codepoints().filter(|c| ('\u{4E00}'..='\u{9FFF}').contains(c)).collect();
    cps.shuffle(&mut rng);
    let real: Vec<GlyphTree> = cps.iter().take(200).map(|&c| rules.decompose(c, DEFAULT_MAX_DEPTH).unwrap()).collect();
    let e_real = batched_vs_sequential(&enc, &s, &real);
    judge(
        e_synth < BATCH_TOL && e_real < BATCH_TOL,
        format!("max |Δh| {e_synth:.1e} on 50 random trees (depth 1-8), {e_real:.1e} on 200 real trees, tol {BATCH_TOL:.0e}"),
    )
}

fn raw_leaves(n: &RawNode, out: &mut Vec<Leaf>) {
    match n {
        RawNode::Leaf(c) => out.push(Leaf::Char(*c)),
        RawNode::Node { children, .. } => children.iter().for_each(|c| raw_leaves(c, out)),
    }
}

fn random_raw(depth: usize, rng: &mut ChaCha8Rng) -> RawNode {
    if depth == 0 || rng.gen_bool(0.2) {
        return RawNode::Leaf(char::from_u32(0x4E00 + rng.gen_range(0..500)).unwrap());
    }
    let op = match rng.gen_range(0..4) {
        0 => RawOperator::Ternary(Idc::LeftToRight),
        1 => RawOperator::Ternary(Idc::AboveToBelow),
        _ => RawOperator::Binary(Idc::ALL[rng.gen_range(0..Idc::ALL.len())]),
    };
    RawNode::Node { op, children: (0..op.arity()).map(|_| random_raw(depth - 1, rng)).collect() }
}

fn has_ternary(n: &RawNode) -> bool {
    match n {
        RawNode::Leaf(_) => false,
        RawNode::Node { op, children } => matches!(op, RawOperator::Ternary(_)) || children.iter().any(has_ternary),
    }
}

fn c3_parser(rules: Option<&RuleTable>) -> Outcome {
    // dictionary entries of the exemplar and its parts
    let entries = parse_rule_text("U+4ED5\t仕\t⿰亻士\nU+4EBB\t亻\t人\nU+58EB\t士\t⿱十一\nU+5341\t十\t⿻一丨\n").unwrap();
    let t = entries.decompose('仕', DEFAULT_MAX_DEPTH).unwrap();
    let leaves = t.leaves();
    let distinct: BTreeSet<Leaf> = leaves.iter().copied().collect();
    let want: BTreeSet<Leaf> = "人丨一".chars().map(Leaf::Char).collect();
    let exemplar = leaves.len() == 4 && distinct == want;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bin_ok = 0;
    let mut made = 0;
    while made < 1000 {
        let raw = random_raw(5, &mut rng);
        if !has_ternary(&raw) {
            continue;
        }
        made += 1;
        let mut want = Vec::new();
        raw_leaves(&raw, &mut want);
        let b = binarize(&raw).unwrap();
        bin_ok += usize::from(b.leaves() == want && b.node_count() == 2 * b.leaf_count() - 1);
    }

    let Some(rules) = rules else {
        return Outcome::NotRun(format!("exemplar ok={exemplar}, binarize {bin_ok}/1000; ids.txt absent"));
    };
    let report = rules.validate(DEFAULT_MAX_DEPTH);
    let mut round_trip_fail = 0;
    let mut n = 0;
    for c in rules.codepoints() {
        let Ok(t) = rules.decompose(c, DEFAULT_MAX_DEPTH) else { continue };
        n += 1;
        let back = reconstruct_pre_order(&t.linearize(LinearOrder::Pre));
        round_trip_fail += usize::from(back.ok().as_ref() != Some(&t.without_sources()));
    }
    let real = rules.decompose('仕', DEFAULT_MAX_DEPTH).map(|t| t.to_string()).unwrap_or_default();
    judge(
        exemplar && report.failures.is_empty() && round_trip_fail == 0 && bin_ok == 1000,
        format!(
            "仕 -> {} leaves {:?} from its dictionary entries (bundled table: {real}); {} expansion failures; \
             pre-order round trip {}/{n}; binarize {bin_ok}/1000",
            leaves.len(),
            distinct.iter().map(|l| l.to_string()).collect::<String>(),
            report.failures.len(),
            n - round_trip_fail
        ),
    )
}

fn c4_segmentation() -> Outcome {
    let exemplars = [("zing", ("z", "i", "ng")), ("fui", ("f", "ui", "#")), ("jau", ("j", "au", "#"))];
    let ex_ok = exemplars.iter().all(|(s, (o, n, c))| {
        segment_jyutping(s).map(|y| (y.onset.as_str(), y.nucleus.as_str(), y.coda.as_str()) == (*o, *n, *c)).unwrap_or(false)
    });
    let Some(path) = common::data_file("Unihan_Readings.txt") else {
        return Outcome::NotRun(format!("exemplars ok={ex_ok}; Unihan_Readings.txt absent"));
    };
    let readings = parse_unihan_readings(path).unwrap();
    let (mut n, mut bad) = (0, 0);
    for r in readings.values().flatten() {
        n += 1;
        let ok = segment_jyutping(r).map(|s| s.toneless() == strip_tone(r)).unwrap_or(false);
        bad += usize::from(!ok);
    }
    judge(ex_ok && bad == 0, format!("{n} readings, {bad} failures; exemplars ok={ex_ok}"))
}

fn c5_metrics() -> Outcome {
    let gold = [
        PronEntry { ch: '一', onset: "j".into(), nucleus: "a".into(), coda: "t".into() },
        PronEntry { ch: '二', onset: "j".into(), nucleus: "i".into(), coda: "#".into() },
    ];
    let pred = [
        Prediction { onset: "j".into(), nucleus: "a".into(), coda: "k".into() },
        Prediction { onset: "j".into(), nucleus: "i".into(), coda: "#".into() },
    ];
    let r = EvalReport::from_pairs(pred.iter().zip(&gold));
    let ter_ok = (r.ter - 100.0 / 6.0).abs() < 1e-9 && r.ser == 50.0;

    let lines = ["abba", "ba"];
    let cfg = LmConfig { embed_dim: 4, layers: vec![4], ..LmConfig::default() };
    let mut m = LmModel::new(&cfg, CharVocab::from_lines(&lines), None).unwrap();
    for id in [m.out_w, m.out_b] {
        let z = Tensor::zeros(m.store.get(id).shape());
        m.store.set(id, z).unwrap();
    }
    let lm = eval_lm(&m, &lines, None, None).unwrap();
    judge(
        ter_ok && m.vocab.len() == 4 && lm.bpc == 2.0 && lm.ppl == 4.0,
        format!("TER {:.2}% SER {:.0}% on 1 wrong phoneme of 6; uniform |V|=4: BPC {} PPL {}", r.ter, r.ser, lm.bpc, lm.ppl),
    )
}

struct RealData {
    rules: RuleTable,
    corpus: Corpus,
    variants: VariantMap,
}

fn load_real() -> Option<RealData> {
    let ids = common::data_file("ids.txt")?;
    let rd = common::data_file("Unihan_Readings.txt")?;
    let var = common::data_file("Unihan_Variants.txt")?;
    let rules = load_rule_table(ids).unwrap();
    let readings = parse_unihan_readings(rd).unwrap();
    let variants = parse_unihan_variants(var).unwrap();
    let corpus = Corpus::build(&readings, &variants, Some(&rules), 0);
    Some(RealData { rules, corpus, variants })
}

fn split(real: &RealData, sc: Scenario) -> DatasetSplit {
    build_scenario(&real.corpus, sc, sc.default_sizes(), &real.variants, 0).unwrap()
}

fn c6_overfit(real: Option<&RealData>) -> Outcome {
    let (rules, entries, source) = match real {
        Some(r) => {
            let s = split(r, Scenario::Mixed);
            (r.rules.clone(), s.train[..64].to_vec(), "scenario-1 training chars")
        }
        None => {
            let (r, e) = toy(64);
            (r, e, "synthetic compounds")
        }
    };
    let data = memorize_split(&entries);
    let mut hits = Vec::new();
    for seed in 0..3 {
        let cfg = RunConfig { epochs: 500, seed, ..RunConfig::default() };
        let out = train_with(&cfg, &data, &rules, TrainOptions { track_train_ter: true }).unwrap();
        let at = out.history.iter().find(|e| e.train_ter == Some(0.0)).map(|e| e.epoch);
        hits.push(at);
    }
    let n = hits.iter().filter(|h| h.is_some()).count();
    let desc = hits.iter().map(|h| h.map_or("never".to_string(), |e| format!("epoch {e}"))).collect::<Vec<_>>().join(", ");
    judge(n >= 2, format!("default treeLSTM on 64 {source}: training TER 0 at {desc} ({n}/3 seeds, need 2)"))
}

fn c7_cache() -> Outcome {
    let (rules, entries) = toy(16);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 300, 10, 7);
    let cfg = LmConfig {
        embedding: EmbeddingKind::Hierarchical,
        embed_dim: 8,
        tree_input_dim: 8,
        layers: vec![16],
        ..LmConfig::default()
    };
    let m = LmModel::new(&cfg, CharVocab::from_lines(&lines), Some(&rules)).unwrap();
    let plain = eval_lm(&m, &lines, Some(&rules), None).unwrap();
    let mut cache = EmbeddingCache::new();
    let cached = eval_lm(&m, &lines, Some(&rules), Some(&mut cache)).unwrap();
    let d = (plain.bpc - cached.bpc).abs();
    judge(d < CACHE_TOL && cache.len() > 0, format!("|ΔBPC| {d:.1e} over {} symbols, tol {CACHE_TOL:.0e}", plain.symbols))
}

struct Extended {
    s1_model: PronModel,
    s1_test_ter: f64,
    s1_best: RunConfig,
    s2_wins: usize,
    s2_detail: String,
}

fn run_extended(real: &RealData) -> Extended {
    let s1 = split(real, Scenario::Mixed);
    let base = RunConfig::default();
    let g = grid_search(&base, &s1, &real.rules, &Grid::default(), true).unwrap();
    let s1_test_ter = evaluate(&g.outcome.model, &s1.test, &real.rules).unwrap().ter;

    let s2 = split(real, Scenario::NonSimplifiedToSimplified);
    let lstm = RunConfig { encoder: hierchar::encoders::EncoderKind::Lstm1, ..base.clone() };
    let tree_best = grid_search(&RunConfig { scenario: 2, ..base.clone() }, &s2, &real.rules, &Grid::default(), true)
        .unwrap()
        .best;
    let lstm_best =
        grid_search(&RunConfig { scenario: 2, ..lstm }, &s2, &real.rules, &Grid::default(), true).unwrap().best;
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let t = train(&RunConfig { seed, ..tree_best.clone() }, &s2, &real.rules).unwrap();
        let l = train(&RunConfig { seed, ..lstm_best.clone() }, &s2, &real.rules).unwrap();
        let tt = evaluate(&t.model, &s2.test, &real.rules).unwrap().ter;
        let lt = evaluate(&l.model, &s2.test, &real.rules).unwrap().ter;
        wins += usize::from(tt < lt);
        detail.push(format!("{tt:.1}/{lt:.1}"));
    }
    Extended { s1_model: g.outcome.model, s1_test_ter, s1_best: g.best, s2_wins: wins, s2_detail: detail.join(" ") }
}

fn c8_reproduction(ext: Option<&Extended>) -> Outcome {
    let Some(e) = ext else {
        return Outcome::NotRun("extended; set HIERCHAR_EXTENDED=1 with the data files present".into());
    };
    let in_band = (TER_BAND.0..=TER_BAND.1).contains(&e.s1_test_ter);
    judge(
        in_band && e.s2_wins >= 4,
        format!(
            "scenario 1 treeLSTM test TER {:.2} (band [{}, {}], lr {} dropout {}); scenario 2 tree < LSTM in {}/5 seeds, need 4 (tree/LSTM TER: {})",
            e.s1_test_ter, TER_BAND.0, TER_BAND.1, e.s1_best.learning_rate, e.s1_best.dropout, e.s2_wins, e.s2_detail
        ),
    )
}

fn c9_gate_bias(ext: Option<&Extended>, real: Option<&RealData>) -> Outcome {
    let (Some(e), Some(real)) = (ext, real) else {
        return Outcome::NotRun("extended; set HIERCHAR_EXTENDED=1 with the data files present".into());
    };
    let s1 = split(real, Scenario::Mixed);
    let trees = decompose_entries(&real.rules, &s1.test).unwrap();
    let r = gate_bias(&e.s1_model, &trees).unwrap();
    let pct = r.percent.unwrap_or(0.0);
    judge(pct >= GATE_MIN_PERCENT, format!("{r}; need ≥ {GATE_MIN_PERCENT}%"))
}

fn c10_throughput(rules: Option<&RuleTable>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let trees: Vec<GlyphTree> = match rules {
        Some(r) => {
            let mut cps: Vec<char> = r.codepoints().filter(|c| ('\u{4E00}'..='\u{9FFF}').contains(c)).collect();
            cps.shuffle(&mut rng);
            cps.iter().take(1000).map(|&c| r.decompose(c, DEFAULT_MAX_DEPTH).unwrap()).collect()
        }
        None => (0..1000).map(|i| random_tree(1 + i % 6, &mut rng)).collect(),
    };
    let base = RunConfig::default();
    let vocab = Vocab::from_trees(&trees);
    let mut s = ParamStore::new();
    let cfg = TreeLstmConfig { input_dim: base.input_dim, hidden: base.hidden, bias: true, use_operators: true };
    let enc = TreeLstm::new(&mut s, "t", vocab, cfg, &mut rng);
    let refs: Vec<&GlyphTree> = trees.iter().collect();
    let time = |bs: usize| -> f64 {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            for chunk in refs.chunks(bs) {
                let mut t = Tape::new(&s);
                let b = enc.batch_forward(&mut t, chunk, None).unwrap();
                std::hint::black_box(t.value(b.roots));
            }
            best = best.min(start.elapsed().as_secs_f64());
        }
        best
    };
    let one = time(1);
    let batched = time(128);
    let ratio = one / batched;
    judge(
        ratio >= SPEEDUP_MIN,
        format!(
            "1000 {} trees, D={} H={}: batch-1 {:.3}s, batch-128 {:.3}s, speedup {ratio:.1}x (gate {SPEEDUP_MIN}x)",
            if rules.is_some() { "real" } else { "random" },
            base.input_dim,
            base.hidden,
            one,
            batched
        ),
    )
}

fn main() -> ExitCode {
    let extended = std::env::var("HIERCHAR_EXTENDED").is_ok_and(|v| v == "1");
    let real = load_real();
    let rules = real.as_ref().map(|r| &r.rules);
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let (tag, detail) = match &o {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::NotRun(d) => ("NOT RUN", d),
        };
        println!("[{tag}] {name}: {detail} ({:.1}s)", start.elapsed().as_secs_f64());
        results.push((name, o));
    };
    run("1 gradient fidelity", &mut c1_gradients);
    run("2 batching oracle", &mut || c2_batching(rules));
    run("3 parser suite", &mut || c3_parser(rules));
    run("4 segmentation totality", &mut c4_segmentation);
    run("5 metric identities", &mut c5_metrics);
    run("6 overfit capacity", &mut || c6_overfit(real.as_ref()));
    run("7 cache transparency", &mut c7_cache);
    let ext = match (&real, extended) {
        (Some(r), true) => Some(run_extended(r)),
        _ => None,
    };
    run("8 stochastic reproduction", &mut || c8_reproduction(ext.as_ref()));
    run("9 gate-bias direction", &mut || c9_gate_bias(ext.as_ref(), real.as_ref()));
    run("10 batching throughput", &mut || c10_throughput(rules));
    let failed: Vec<&str> = results.iter().filter(|(_, o)| matches!(o, Outcome::Fail(_))).map(|(n, _)| *n).collect();
    let not_run = results.iter().filter(|(_, o)| matches!(o, Outcome::NotRun(_))).count();
    println!(
        "acceptance: {} passed, {} failed, {not_run} not run",
        results.len() - failed.len() - not_run,
        failed.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
