use approx::assert_relative_eq;
use doccontrast::checks::{all_documents, documents_up_to};
use doccontrast::contrastive_data::build_paired_permutation;
use doccontrast::embedding::{landmark_embed_matrix, oracle_embed_matrix, Clamp, OracleScorer};
use doccontrast::oracle::{psi_vector, sample_landmarks, Basis, LandmarkSet, LandmarkStrategy};
use doccontrast::probe_eval::{estimate_risk, map_topic_recovery, topic_tv_separation};
use doccontrast::rng::stream_rng;
use doccontrast::topic_model::{
    doc_likelihood_given_w, sample_corpus, sample_symmetric_dirichlet, sample_topic_model, split_document,
    Document, LengthSpec, PriorSpec, SplitMode, TopicModel,
};
use doccontrast::TopicModel64;
use ndarray::Array2;
use proptest::prelude::*;

fn mixed_model(k: usize, v: usize, atoms: usize, seed: u64) -> TopicModel64 {
    let rows = (0..k).map(|i| sample_symmetric_dirichlet(v, 1.0, &mut stream_rng(seed, i as u64))).collect();
    let atoms: Vec<Vec<f64>> = (0..atoms)
        .map(|j| sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed ^ 0xA5A5, j as u64)))
        .collect();
    let probs = sample_symmetric_dirichlet(atoms.len(), 2.0, &mut stream_rng(seed ^ 0x5A5A, 0));
    TopicModel::new(rows, PriorSpec::FiniteSupport { atoms, probs }, LengthSpec::Fixed { length: 4 }).unwrap()
}

fn sorted(tokens: &[u32]) -> Vec<u32> {
    let mut t = tokens.to_vec();
    t.sort_unstable();
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn likelihood_matches_assignment_enumeration(k in 1usize..=3, v in 2usize..=4, m in 1usize..=5, seed in any::<u64>()) {
        let model = mixed_model(k, v, 2, seed);
        let w = sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed, 99));
        let doc = Document::new((0..m).map(|i| ((seed >> (3 * i)) % v as u64) as u32).collect());
        let mut brute = 0.0;
        for z in 0..k.pow(m as u32) {
            let mut p = 1.0;
            let mut zz = z;
            for &x in &doc.tokens {
                let t = zz % k;
                zz /= k;
                p *= w[t] * model.word_prob(t, x);
            }
            brute += p;
        }
        let ll = doc_likelihood_given_w(&model, &doc, &w).unwrap().exp();
        prop_assert!((ll - brute).abs() < 1e-12, "{ll} vs {brute}");
    }

    #[test]
    fn fixed_length_likelihoods_sum_to_one(k in 1usize..=3, v in 2usize..=4, m in 1usize..=4, seed in any::<u64>()) {
        let model = mixed_model(k, v, 2, seed);
        let w = sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed, 7));
        let total: f64 = all_documents(v, m)
            .iter()
            .map(|d| doc_likelihood_given_w(&model, d, &w).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn split_halves_recover_the_document(tokens in prop::collection::vec(0u32..20, 2..40), seed in any::<u64>(), random in any::<bool>()) {
        let doc = Document::new(tokens);
        let mode = if random { SplitMode::RandomPartition } else { SplitMode::Contiguous };
        let s = split_document(&doc, mode, &mut stream_rng(seed, 0)).unwrap();
        prop_assert!(s.first_half.len().abs_diff(s.second_half.len()) <= 1);
        let mut merged = s.first_half.tokens.clone();
        merged.extend(&s.second_half.tokens);
        prop_assert_eq!(sorted(&merged), sorted(&doc.tokens));
    }

    #[test]
    fn sampling_is_reproducible(k in 1usize..=4, v in 2usize..=30, seed in any::<u64>()) {
        let a = sample_topic_model::<f64>(k, v, 1.0, seed).unwrap();
        let b = sample_topic_model::<f64>(k, v, 1.0, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(sample_corpus(&a, 5, seed), sample_corpus(&b, 5, seed));
    }

    #[test]
    fn factorization_identity(k in 1usize..=3, v in 2usize..=4, m in 1usize..=4, seed in any::<u64>()) {
        let model = mixed_model(k, v, 3, seed);
        let basis = Basis::monomial(k, m);
        let w = sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed, 3));
        let pi = doccontrast::oracle::pi_vector(&w, &basis);
        for doc in all_documents(v, m) {
            let psi = psi_vector(&model, &doc, &basis).unwrap();
            let dot: f64 = pi.iter().zip(psi.values()).map(|(a, b)| a * b).sum();
            let direct = doc_likelihood_given_w(&model, &doc, &w).unwrap().exp();
            prop_assert!((dot - direct).abs() < 1e-12);
            // only the degree-m block is populated
            for (j, value) in psi.values().iter().enumerate() {
                if let Basis::Monomial(b) = &basis {
                    if b.degree(j) != m {
                        prop_assert_eq!(*value, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn paired_permutation_invariants(n in 2usize..60, seed in any::<u64>()) {
        let model = sample_topic_model::<f64>(3, 15, 1.0, seed).unwrap().with_length(LengthSpec::Poisson { mean: 8.0 }).unwrap();
        let corpus = sample_corpus(&model, n, seed).documents;
        let ds = build_paired_permutation(&corpus, SplitMode::RandomPartition, seed).unwrap();
        let collisions = ds.provenance.discarded_collisions;
        prop_assert_eq!(ds.positives(), n);
        prop_assert_eq!(ds.negatives(), n - collisions);
        for p in &ds.pairs {
            if p.y == 1 {
                prop_assert_eq!(p.src[0], p.src[1]);
                let mut merged = p.first.tokens.clone();
                merged.extend(&p.second.tokens);
                prop_assert_eq!(sorted(&merged), sorted(&corpus[p.src[0]].tokens));
            } else {
                prop_assert_ne!(p.src[0], p.src[1]);
            }
        }
    }

    #[test]
    fn map_recovery_ignores_positive_scaling(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..30), c in 1e-3f64..1e3, seed in any::<u64>()) {
        let n = rows.len();
        let decoded = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
        let truth: Vec<usize> = (0..n).map(|i| ((seed >> i) % 3) as usize).collect();
        let a = map_topic_recovery(&decoded, 0..3, &truth).unwrap();
        let b = map_topic_recovery(&decoded.mapv(|x| x * c), 0..3, &truth).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn tv_separation_symmetric_and_bounded(k in 2usize..=6, v in 2usize..=20, alpha in 0.1f64..20.0, seed in any::<u64>()) {
        let model = sample_topic_model::<f64>(k, v, alpha, seed).unwrap();
        let tv = topic_tv_separation(&model).unwrap();
        prop_assert!((0.0..=1.0).contains(&tv));
        let mut rows = model.word_dists().to_vec();
        rows.reverse();
        let flipped = TopicModel::new(rows, model.prior().clone(), model.length()).unwrap();
        assert_relative_eq!(topic_tv_separation(&flipped).unwrap(), tv, epsilon = 1e-15);
    }

    #[test]
    fn landmark_embedding_is_permutation_equivariant(seed in any::<u64>(), shift in 1usize..7) {
        let model = sample_topic_model::<f64>(3, 8, 1.0, seed).unwrap();
        let landmarks = sample_landmarks(&model, 7, 3, &mut stream_rng(seed, 1));
        let docs = documents_up_to(8, 2, 2);
        let scorer = OracleScorer { model: &model };
        let clamp = Clamp::new(1.0 - 1e-4);
        let a = landmark_embed_matrix(&scorer, &landmarks, &docs, clamp).unwrap();
        let mut rotated = landmarks.clone();
        rotated.rotate_left(shift);
        let b = landmark_embed_matrix(&scorer, &rotated, &docs, clamp).unwrap();
        for i in 0..docs.len() {
            for j in 0..7 {
                prop_assert_eq!(a[[i, (j + shift) % 7]], b[[i, j]]);
                prop_assert!(a[[i, j]].is_finite() && a[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn exact_f_star_reproduces_oracle_embedding(seed in any::<u64>()) {
        let model = sample_topic_model::<f64>(3, 6, 2.0, seed).unwrap();
        let landmarks = sample_landmarks(&model, 6, 2, &mut stream_rng(seed, 2));
        let docs = documents_up_to(6, 1, 2);
        let oracle = oracle_embed_matrix(&model, &landmarks, &docs).unwrap();
        let f_max = oracle.iter().fold(0.0f64, |m, &g| m.max(g / (1.0 + g))).max(0.5);
        let clamp = Clamp { floor: 0.0, f_max: f_max.min(1.0 - 1e-12) };
        let plugged = landmark_embed_matrix(&OracleScorer { model: &model }, &landmarks, &docs, clamp).unwrap();
        for (a, b) in plugged.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn oracle_embedding_has_zero_risk(seed in any::<u64>(), theta in prop::collection::vec(-2.0f64..2.0, 3)) {
        let model = sample_topic_model::<f64>(3, 6, 1.0, seed).unwrap();
        let basis = Basis::SingleTopic { num_topics: 3 };
        let landmarks = sample_landmarks(&model, 8, 2, &mut stream_rng(seed, 3));
        let set = LandmarkSet::new(&model, landmarks.clone(), basis.clone(), LandmarkStrategy::Sampled).unwrap();
        prop_assume!(set.has_full_row_rank() && set.min_singular() > 1e-3);
        let fit = documents_up_to(6, 1, 2);
        let eval = all_documents(6, 3);
        let embed = |d: &[Document]| Ok(oracle_embed_matrix(&model, &landmarks, d)?);
        let r = estimate_risk(&model, embed, &theta, &basis, &fit, &eval).unwrap();
        prop_assert!(r.risk < 1e-10, "risk {}", r.risk);
    }

    #[test]
    fn exp_is_affine_near_zero(s in -0.2f64..0.2) {
        prop_assert!((s.exp() - (1.0 + s)).abs() / s.exp() < 0.03);
    }
}

