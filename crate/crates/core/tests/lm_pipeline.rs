mod common;

use std::time::Instant;

use common::toy::{markov_lines, toy};
use hierchar::autodiff::{Tape, Tensor};
use hierchar::lm::{
    char_tree, eval_lm, stream, train_lm, unigram_entropy, EmbeddingCache, EmbeddingKind, LmConfig, LmError, LmInput,
    LmModel, Sym, CharVocab,
};

fn small(embedding: EmbeddingKind) -> LmConfig {
    LmConfig {
        embedding,
        embed_dim: 16,
        tree_input_dim: 8,
        layers: vec![32],
        dropout_input: 0.0,
        dropout_hidden: 0.0,
        dropout_output: 0.0,
        learning_rate: 1e-2,
        lr_decay_epoch: None,
        weight_decay: 0.0,
        epochs: 3,
        batch_size: 10,
        bptt: 20,
        clip_norm: 1.0,
        seed: 0,
    }
}

fn zero_output(model: &mut LmModel) {
    for id in [model.out_w, model.out_b] {
        let z = Tensor::zeros(model.store.get(id).shape());
        model.store.set(id, z).unwrap();
    }
}

#[test]
fn uniform_model_over_four_symbols() {
    let lines = ["abba", "ba"];
    let mut m = LmModel::new(&small(EmbeddingKind::Lookup), CharVocab::from_lines(&lines), None).unwrap();
    assert_eq!(m.vocab.len(), 4);
    zero_output(&mut m);
    let r = eval_lm(&m, &lines, None, None).unwrap();
    assert_eq!(r.bpc, 2.0);
    assert_eq!(r.ppl, 4.0);
    assert_eq!(r.symbols, 8);
    let (p, _) = m.step(Sym::Char('a'), None, None, None).unwrap();
    assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn step_distribution_sums_to_one() {
    let (rules, entries) = toy(16);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 200, 10, 1);
    for kind in [EmbeddingKind::Lookup, EmbeddingKind::Hierarchical] {
        let m = LmModel::new(&small(kind), CharVocab::from_lines(&lines), Some(&rules)).unwrap();
        let (p, st) = m.step(Sym::Eos, None, Some(&rules), None).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (p, _) = m.step(Sym::Char(chars[3]), Some(&st), Some(&rules), None).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn trained_model_beats_unigram_and_keeps_ppl_identity() {
    let (rules, entries) = toy(16);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 1000, 10, 2);
    let h = unigram_entropy(&stream(&lines));
    for kind in [EmbeddingKind::Lookup, EmbeddingKind::Hierarchical] {
        let cfg = LmConfig { epochs: 50, ..small(kind) };
        let out = train_lm(&cfg, &lines, None, Some(&rules)).unwrap();
        let r = eval_lm(&out.model, &lines, Some(&rules), None).unwrap();
        assert!(r.bpc.is_finite() && out.history.iter().all(|e| e.train_bpc.is_finite()));
        assert!(r.bpc < h, "{kind:?}: {} bpc vs unigram {h}", r.bpc);
        assert_eq!(r.ppl, r.bpc.exp2());
    }
}

#[test]
fn training_bpc_falls_over_ten_epochs() {
    let (rules, entries) = toy(16);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 1000, 10, 3);
    for kind in [EmbeddingKind::Lookup, EmbeddingKind::Hierarchical] {
        let mut down = 0;
        for seed in 0..3 {
            let cfg = LmConfig { epochs: 10, seed, dropout_input: 0.1, dropout_hidden: 0.1, dropout_output: 0.25, ..small(kind) };
            let h = train_lm(&cfg, &lines, None, Some(&rules)).unwrap().history;
            down += usize::from(h[9].train_bpc < h[0].train_bpc);
        }
        assert_eq!(down, 3, "{kind:?}");
    }
}

#[test]
fn seeds_control_training() {
    let (rules, entries) = toy(16);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 300, 10, 4);
    let cfg = LmConfig { dropout_input: 0.2, ..small(EmbeddingKind::Hierarchical) };
    let a = train_lm(&cfg, &lines, None, Some(&rules)).unwrap();
    let b = train_lm(&cfg, &lines, None, Some(&rules)).unwrap();
    let c = train_lm(&LmConfig { seed: 1, ..cfg }, &lines, None, Some(&rules)).unwrap();
    assert_eq!(a.history, b.history);
    let same = |x: &LmModel, y: &LmModel| x.store.ids().all(|id| x.store.get(id) == y.store.get(id));
    assert!(same(&a.model, &b.model));
    assert!(!same(&a.model, &c.model));
}

#[test]
fn memorizes_a_short_corpus() {
    let line = "天地玄黃宇宙洪荒日月盈昃辰宿列張寒來暑往秋收";
    let lines = [line];
    let cfg = LmConfig { epochs: 300, batch_size: 1, bptt: 32, layers: vec![48], ..small(EmbeddingKind::Lookup) };
    let out = train_lm(&cfg, &lines, None, None).unwrap();
    let got: String = out
        .model
        .greedy(&[], 20, None)
        .unwrap()
        .into_iter()
        .map(|s| match s {
            Sym::Char(c) => c,
            _ => '?',
        })
        .collect();
    assert_eq!(got, line.chars().take(20).collect::<String>());
}

#[test]
fn cache_is_transparent() {
    let (rules, entries) = toy(24);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let train: Vec<String> = markov_lines(&chars[..16], 600, 10, 5);
    // Held-out text includes characters never seen in training.
    let test: Vec<String> = markov_lines(&chars, 400, 10, 6);
    let cfg = LmConfig { epochs: 5, ..small(EmbeddingKind::Hierarchical) };
    let model = train_lm(&cfg, &train, None, Some(&rules)).unwrap().model;

    let plain = eval_lm(&model, &test, Some(&rules), None).unwrap();
    let mut cache = EmbeddingCache::new();
    let cached = eval_lm(&model, &test, Some(&rules), Some(&mut cache)).unwrap();
    assert!((plain.bpc - cached.bpc).abs() < 1e-9, "{} vs {}", plain.bpc, cached.bpc);
    assert!(cached.composed_oov > 0);
    assert_eq!(plain.composed_oov, cached.composed_oov);

    assert!(!cache.ensure(&model, chars.iter().copied(), &rules).unwrap());
    let LmInput::Hierarchical { tree, .. } = &model.input else { panic!() };
    for &c in &chars {
        let t = char_tree(&rules, &model.vocab, c).unwrap();
        let mut tape = Tape::new(&model.store);
        let fresh = tree.forward(&mut tape, &t).unwrap();
        let h = tape.value(fresh.root().h);
        let row = cache.get(c).unwrap();
        assert!(h.data().iter().zip(row).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    let mut changed = model.clone();
    let id = changed.out_b;
    changed.store.get_mut(id).data_mut()[0] += 1.0;
    assert!(!cache.is_fresh(&changed));
    assert!(cache.ensure(&changed, chars.iter().copied(), &rules).unwrap());
    assert!(cache.is_fresh(&changed));
    assert!(!cache.ensure(&changed, chars.iter().copied(), &rules).unwrap());
}

#[test]
fn cached_evaluation_speed_report() {
    let (rules, entries) = toy(24);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 1000, 10, 7);
    let hier = train_lm(&LmConfig { epochs: 1, ..small(EmbeddingKind::Hierarchical) }, &lines, None, Some(&rules)).unwrap();
    let base = train_lm(&LmConfig { epochs: 1, ..small(EmbeddingKind::Lookup) }, &lines, None, Some(&rules)).unwrap();
    let t = Instant::now();
    eval_lm(&base.model, &lines, None, None).unwrap();
    let t_base = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let mut cache = EmbeddingCache::new();
    eval_lm(&hier.model, &lines, Some(&rules), Some(&mut cache)).unwrap();
    let t_hier = t.elapsed().as_secs_f64();
    println!("cached hierarchical eval {:.1} ms, lookup eval {:.1} ms, ratio {:.2}", t_hier * 1e3, t_base * 1e3, t_hier / t_base);
}

#[test]
fn oov_policy_differs_by_input_kind() {
    let (rules, entries) = toy(24);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let train = markov_lines(&chars[..16], 300, 10, 8);
    let test = markov_lines(&chars, 300, 10, 9);
    let base = train_lm(&small(EmbeddingKind::Lookup), &train, None, None).unwrap().model;
    let hier = train_lm(&small(EmbeddingKind::Hierarchical), &train, None, Some(&rules)).unwrap().model;
    let rb = eval_lm(&base, &test, None, None).unwrap();
    let rh = eval_lm(&hier, &test, Some(&rules), None).unwrap();
    assert_eq!(rb.oov, rh.oov);
    assert!(rb.oov > 0);
    assert_eq!(rb.composed_oov, 0);
    assert!(rh.composed_oov > 0);
    assert_eq!(hier.input_sym(Sym::Char('☃'), Some(&rules)), Sym::Unk);
}

#[test]
fn checkpoint_round_trip() {
    let (rules, entries) = toy(16);
    let chars: Vec<char> = entries.iter().map(|e| e.ch).collect();
    let lines = markov_lines(&chars, 300, 10, 10);
    let dir = tempfile::tempdir().unwrap();
    for kind in [EmbeddingKind::Lookup, EmbeddingKind::Hierarchical] {
        let m = train_lm(&small(kind), &lines, Some(&lines[..5]), Some(&rules)).unwrap().model;
        let p = dir.path().join("lm.ckpt");
        m.save(&p).unwrap();
        let back = LmModel::load(&p).unwrap();
        assert_eq!(eval_lm(&m, &lines, Some(&rules), None).unwrap(), eval_lm(&back, &lines, Some(&rules), None).unwrap());
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let empty: [&str; 0] = [];
    assert!(matches!(train_lm(&small(EmbeddingKind::Lookup), &empty, None, None), Err(LmError::Data(_))));
    assert!(matches!(train_lm(&small(EmbeddingKind::Hierarchical), &["ab"], None, None), Err(LmError::Data(_))));
    let m = LmModel::new(&small(EmbeddingKind::Lookup), CharVocab::from_lines(&["ab"]), None).unwrap();
    assert!(eval_lm(&m, &empty, None, None).is_err());
}
