use hpyp_core::corpus::{Tweet, TweetCorpus, Vocabulary};
use hpyp_core::math::ln_gamma;
use hpyp_core::tntm::{self, MhProposal, TntmConfig, TntmModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_author_corpus() -> TweetCorpus {
    let raw: [(usize, &[u32], &[u32]); 6] = [
        (0, &[0], &[0, 1, 2]),
        (0, &[], &[1, 1, 3]),
        (0, &[2], &[2, 0]),
        (1, &[3], &[3, 4, 4]),
        (1, &[4, 3], &[4, 3]),
        (1, &[], &[0, 4, 3]),
    ];
    TweetCorpus {
        vocab: Vocabulary::from_tokens((0..5).map(|i| format!("v{i}")).collect()),
        authors: vec!["a".into(), "b".into()],
        tweets: raw
            .iter()
            .enumerate()
            .map(|(i, &(author, hashtags, words))| Tweet {
                id: format!("t{i}"),
                author,
                hashtags: hashtags.to_vec(),
                words: words.to_vec(),
            })
            .collect(),
        edges: vec![(0, 1)],
    }
}

fn model_in_network_phase(seed: u64) -> TntmModel {
    let config = TntmConfig {
        k_init: 3,
        mh_start: 5,
        ..TntmConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = tntm::build_graph(&two_author_corpus(), &config, &mut rng).unwrap();
    model.full_inference(5, &mut rng).unwrap();
    model.begin_network_phase().unwrap();
    assert!(model.state.num_topics >= 2, "want a non-trivial instance");
    model
}

fn ln_dirichlet(x: &[f64], a: &[f64]) -> f64 {
    let sum: f64 = a.iter().sum();
    ln_gamma(sum) - a.iter().map(|&v| ln_gamma(v)).sum::<f64>()
        + x.iter().zip(a).map(|(&xi, &ai)| (ai - 1.0) * xi.ln()).sum::<f64>()
}

fn ln_sigmoid(v: f64) -> f64 {
    -(1.0 + (-v).exp()).ln()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Network prior and likelihood over the two ordered pairs (a,b), (b,a),
/// written out for a 2x2 covariance.
fn network_term(q: &[f64], nu: &[Vec<f64>], links: [bool; 2]) -> f64 {
    let sim = cosine(&nu[0], &nu[1]);
    // both ordered pairs share the same similarity, so every kernel entry is 0.5
    let off = 0.5;
    let diag = 0.5 + 1.0;
    let det = diag * diag - off * off;
    let d = [q[0] - sim, q[1] - sim];
    let quad = (diag * d[0] * d[0] - 2.0 * off * d[0] * d[1] + diag * d[1] * d[1]) / det;
    let prior = -0.5 * (quad + det.ln() + 2.0 * (2.0 * std::f64::consts::PI).ln());
    let lik: f64 = q
        .iter()
        .zip(links)
        .map(|(&v, l)| if l { ln_sigmoid(v) } else { ln_sigmoid(-v) })
        .sum();
    prior + lik
}

#[test]
fn acceptance_ratio_matches_hand_evaluation() {
    let model = model_in_network_phase(21);
    let k = model.state.num_topics;
    let (mu0, nu) = model.explicit_vectors().unwrap();
    let q_old = model.network.as_ref().unwrap().q.clone();
    let links = model.network.as_ref().unwrap().links.clone();
    assert_eq!(model.network.as_ref().unwrap().pairs, vec![(0, 1), (1, 0)]);
    let links = [links[0], links[1]];

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p: MhProposal = model.propose(&mut rng).unwrap();
    let got = model.mh_log_acceptance(&p).unwrap();

    let graph = &model.state.graph;
    let mut want = network_term(&p.q, &p.nu, links) - network_term(&q_old, &nu, links);
    // root exponents: hashtag-level tables plus author tables frozen at the switch
    for j in 0..k {
        let mut e = graph.node(model.mu1.unwrap()).tables(j) as f64;
        e += model.frozen_nu_tables.iter().map(|row| row[j] as f64).sum::<f64>();
        want += e * (p.mu0[j].ln() - mu0[j].ln());
    }
    // author exponents: tables each tweet-level node sends to its author
    for (d, &eta) in model.eta.iter().enumerate() {
        let a = model.authors[d];
        for j in 0..k {
            let t = graph.node(eta).tables(j) as f64;
            want += t * (p.nu[a][j].ln() - nu[a][j].ln());
        }
    }
    let scaled = |beta: f64, v: &[f64]| v.iter().map(|x| beta * x).collect::<Vec<_>>();
    let b0 = graph.node(model.mu0).concentration;
    want += ln_dirichlet(&mu0, &scaled(b0, &p.mu0)) - ln_dirichlet(&p.mu0, &scaled(b0, &mu0));
    for (i, &id) in model.nu.iter().enumerate() {
        let b = graph.node(id).concentration;
        want += ln_dirichlet(&nu[i], &scaled(b, &p.nu[i])) - ln_dirichlet(&p.nu[i], &scaled(b, &nu[i]));
    }
    assert!((got - want).abs() < 1e-8, "library {got}, by hand {want}");
}

#[test]
fn proposals_are_centred_on_the_current_vectors() {
    let model = model_in_network_phase(22);
    let (mu0, nu) = model.explicit_vectors().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 4_000;
    let mut mean_mu0 = vec![0.0; mu0.len()];
    let mut mean_nu = vec![vec![0.0; mu0.len()]; nu.len()];
    for _ in 0..n {
        let p = model.propose(&mut rng).unwrap();
        for (m, x) in mean_mu0.iter_mut().zip(&p.mu0) {
            *m += x / n as f64;
        }
        for (row, prop) in mean_nu.iter_mut().zip(&p.nu) {
            for (m, x) in row.iter_mut().zip(prop) {
                *m += x / n as f64;
            }
        }
    }
    let b0 = model.state.graph.node(model.mu0).concentration;
    for (m, &v) in mean_mu0.iter().zip(&mu0) {
        let sd = (v * (1.0 - v) / (b0 + 1.0) / n as f64).sqrt();
        assert!((m - v).abs() < 5.0 * sd + 1e-12, "{m} vs {v}");
    }
    for (i, row) in mean_nu.iter().enumerate() {
        let b = model.state.graph.node(model.nu[i]).concentration;
        for (m, &v) in row.iter().zip(&nu[i]) {
            let sd = (v * (1.0 - v) / (b + 1.0) / n as f64).sqrt();
            assert!((m - v).abs() < 5.0 * sd + 1e-12, "{m} vs {v}");
        }
    }
}

#[test]
fn network_phase_leaves_fixed_vectors_alone_during_sweeps() {
    let mut model = model_in_network_phase(23);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let betas: Vec<f64> = std::iter::once(model.mu0)
        .chain(model.nu.iter().copied())
        .map(|id| model.state.graph.node(id).concentration)
        .collect();
    for _ in 0..5 {
        let before = model.explicit_vectors().unwrap();
        let row = model.step(&mut rng).unwrap();
        let after = model.explicit_vectors().unwrap();
        if row.accepted == Some(false) {
            assert_eq!(before, after);
        }
        assert!(model.state.graph.audit().is_empty());
        assert!(row.network_loglik.unwrap().is_finite());
    }
    let after: Vec<f64> = std::iter::once(model.mu0)
        .chain(model.nu.iter().copied())
        .map(|id| model.state.graph.node(id).concentration)
        .collect();
    assert_eq!(betas, after);
}

#[test]
fn switching_off_the_network_skips_the_phase() {
    let config = TntmConfig {
        network: false,
        mh_start: 1,
        ..TntmConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = tntm::build_graph(&two_author_corpus(), &config, &mut rng).unwrap();
    let rows = model.full_inference(4, &mut rng).unwrap();
    assert!(rows.iter().all(|r| r.accepted.is_none() && r.network_loglik.is_none()));
    assert!(model.explicit_vectors().is_none());
}
