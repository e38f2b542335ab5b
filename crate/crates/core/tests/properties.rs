use proptest::prelude::*;

use sparseloco::compress::{compress, dct_chunk, dct_inverse, dequantize, quantize, topk_indices, CompressorConfig, QuantSpec, Selection};
use sparseloco::config::density_to_k;
use sparseloco::data::{decode_dataset, encode_dataset, LabeledData, ShardedDataset};
use sparseloco::index_codec::{decode_enumerative, decode_naive, encode_enumerative, encode_naive, IndexCodec, IndexSet};
use sparseloco::outer::{check_synchronized, ef_compress_aggregate, lom_direction, nesterov_direction, sparseloco_outer_step};
use sparseloco::wire::message_size_bytes;
use sparseloco::{ParamVector, Rng, SparseMessage};

fn subset(c: usize, k: usize, seed: u64) -> IndexSet {
    let idx = Rng::new(seed, 0).sample_sorted(c, k).into_iter().map(|i| i as u32).collect();
    IndexSet::new(c, idx).unwrap()
}

fn gaussian(len: usize, seed: u64) -> ParamVector<f64> {
    let mut rng = Rng::new(seed, 1);
    ParamVector::new((0..len).map(|_| rng.normal()).collect()).unwrap()
}

fn codec() -> impl Strategy<Value = IndexCodec> {
    prop_oneof![Just(IndexCodec::Naive), Just(IndexCodec::Enumerative), Just(IndexCodec::Dense)]
}

fn bits() -> impl Strategy<Value = u8> {
    prop::sample::select(QuantSpec::SUPPORTED.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn index_codecs_round_trip((c, k) in (1usize..700).prop_flat_map(|c| (Just(c), 1..=c)), seed: u64) {
        let set = subset(c, k, seed);
        prop_assert_eq!(decode_naive(&encode_naive(&set), c, k).unwrap(), set.clone());
        prop_assert_eq!(decode_enumerative(&encode_enumerative(&set, k).unwrap(), c, k).unwrap(), set);
    }

    #[test]
    fn wire_round_trip_and_size(
        len in 1usize..3000,
        chunk in 1usize..600,
        kfrac in 0.0f64..1.0,
        b in bits(),
        codec in codec(),
        dct: bool,
        seed: u64,
    ) {
        let k = ((kfrac * chunk as f64) as usize).clamp(1, chunk);
        let k = if codec == IndexCodec::Dense { chunk } else { k };
        let cfg = CompressorConfig { chunk_size: chunk, k, selection: Selection::TopK, dct, quant: QuantSpec::new(b).unwrap() };
        let v = gaussian(len, seed).cast::<f32>();
        let c = compress(&v, &cfg, &mut Rng::new(seed, 2)).unwrap();
        let msg = SparseMessage::from_compressed(&c, codec).unwrap();
        let bytes = msg.serialize().unwrap();
        prop_assert_eq!(bytes.len() as u64, message_size_bytes(len as u64, chunk as u64, k as u64, b, codec));
        let back = SparseMessage::parse(&bytes).unwrap();
        prop_assert_eq!(&back, &msg);
        if !dct {
            prop_assert_eq!(back.to_dense::<f32>().unwrap(), c.to_dense());
        }
    }

    #[test]
    fn parse_rejects_garbage_without_panicking(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = SparseMessage::parse(&bytes);
    }

    #[test]
    fn corrupted_messages_never_panic(seed: u64, flips in prop::collection::vec((any::<usize>(), any::<u8>()), 1..6)) {
        let cfg = CompressorConfig { chunk_size: 64, k: 5, selection: Selection::TopK, dct: false, quant: QuantSpec::new(2).unwrap() };
        let c = compress(&gaussian(300, seed), &cfg, &mut Rng::new(0, 0)).unwrap();
        let mut bytes = SparseMessage::from_compressed(&c, IndexCodec::Enumerative).unwrap().serialize().unwrap();
        for (at, x) in flips {
            let n = bytes.len();
            bytes[at % n] ^= x;
        }
        if let Ok(m) = SparseMessage::parse(&bytes) {
            let _ = m.to_dense::<f64>();
        }
    }

    #[test]
    fn quantizer_error_bound(b in prop::sample::select(vec![2u8, 3, 4, 8]), scale in 1e-3f64..1e3, seed: u64) {
        let v = gaussian(64, seed);
        let x: Vec<f64> = v.iter().map(|a| a * scale).collect();
        let spec = QuantSpec::new(b).unwrap();
        let q = quantize(&x, spec);
        let s = q.scale_f64();
        let amax = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        prop_assert!(s >= amax);
        let d: Vec<f64> = dequantize(&q.codes, q.scale, spec).unwrap();
        for (a, y) in x.iter().zip(&d) {
            prop_assert!((a - y).abs() <= s / 2f64.powi(b as i32) * (1.0 + 1e-12));
            prop_assert!(q.codes.iter().all(|&c| c >> b == 0));
        }
    }

    #[test]
    fn message_size_monotone_in_k(c in 2usize..4097, k1 in 1usize..2049, k2 in 1usize..2049, b in bits(), codec in codec()) {
        let half = c / 2;
        prop_assume!(half >= 1 && codec != IndexCodec::Dense);
        let (lo, hi) = (k1.min(k2).min(half).max(1), k1.max(k2).min(half).max(1));
        let n = 3 * c as u64 + 17;
        prop_assert!(message_size_bytes(n, c as u64, lo as u64, b, codec) <= message_size_bytes(n, c as u64, hi as u64, b, codec));
    }

    #[test]
    fn topk_keeps_the_largest(v in prop::collection::vec(-100.0f64..100.0, 1..200), kfrac in 0.0f64..1.0) {
        let k = ((kfrac * v.len() as f64) as usize).clamp(1, v.len());
        let idx = topk_indices(&v, k);
        prop_assert_eq!(idx.len(), k);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let kept: f64 = idx.iter().map(|&i| v[i as usize].abs()).fold(f64::INFINITY, f64::min);
        let dropped: f64 = (0..v.len() as u32).filter(|i| !idx.contains(i)).map(|i| v[i as usize].abs()).fold(0.0, f64::max);
        prop_assert!(kept >= dropped);
    }

    #[test]
    fn dct_round_trip(v in prop::collection::vec(-10.0f64..10.0, 1..300)) {
        let back = dct_inverse(&dct_chunk(&v));
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ef_telescopes(beta in 0.0f64..1.0, steps in 1usize..30, kfrac in 0.01f64..1.0, b in bits(), seed: u64) {
        let len = 333;
        let k = ((kfrac * 64.0) as usize).clamp(1, 64);
        let cfg = CompressorConfig { chunk_size: 64, k, selection: Selection::TopK, dct: false, quant: QuantSpec::new(b).unwrap() };
        let mut errors = vec![ParamVector::<f64>::zeros(len); 2];
        let mut rngs = vec![Rng::new(seed, 5), Rng::new(seed, 6)];
        let mut delta_sum = vec![ParamVector::<f64>::zeros(len); 2];
        let mut sent_sum = vec![ParamVector::<f64>::zeros(len); 2];
        for t in 0..steps {
            let deltas = vec![gaussian(len, seed ^ t as u64), gaussian(len, seed.wrapping_add(1000 + t as u64))];
            let step = ef_compress_aggregate(&deltas, &mut errors, beta, &cfg, &mut rngs).unwrap();
            for r in 0..2 {
                delta_sum[r].scale_in_place(beta);
                delta_sum[r].add_assign(&deltas[r]).unwrap();
                sent_sum[r].scale_in_place(beta);
                sent_sum[r].add_assign(&step.messages[r].to_dense()).unwrap();
            }
        }
        for r in 0..2 {
            let mut lhs = errors[r].clone();
            lhs.add_assign(&sent_sum[r]).unwrap();
            prop_assert!(lhs.max_abs_diff(&delta_sum[r]).unwrap() < 1e-9);
        }
    }

    #[test]
    fn sparse_step_keeps_replicas_synchronized(replicas in 1usize..6, seed: u64, randk: bool) {
        let len = 200;
        let cfg = CompressorConfig {
            chunk_size: 50,
            k: 4,
            selection: if randk { Selection::RandomK } else { Selection::TopK },
            dct: false,
            quant: QuantSpec::new(2).unwrap(),
        };
        let mut thetas = vec![gaussian(len, seed); replicas];
        let deltas: Vec<_> = (0..replicas).map(|r| gaussian(len, seed.wrapping_add(r as u64 + 1))).collect();
        let mut errors = vec![ParamVector::zeros(len); replicas];
        let mut rngs: Vec<_> = (0..replicas).map(|r| Rng::new(seed, r as u64)).collect();
        sparseloco_outer_step(&mut thetas, &deltas, &mut errors, 0.95, 0.8, &cfg, &mut rngs).unwrap();
        prop_assert!(check_synchronized(&thetas).is_ok());
    }

    #[test]
    fn local_momentum_average_equals_global(beta in 0.0f64..0.99, replicas in 1usize..6, steps in 1usize..10, seed: u64) {
        let len = 40;
        let mut local = vec![ParamVector::<f64>::zeros(len); replicas];
        let mut global = ParamVector::<f64>::zeros(len);
        for t in 0..steps {
            let deltas: Vec<_> = (0..replicas).map(|r| gaussian(len, seed ^ ((t * 31 + r) as u64))).collect();
            let a = lom_direction(&deltas, &mut local, beta).unwrap();
            let refs: Vec<&ParamVector<f64>> = deltas.iter().collect();
            let b = nesterov_direction(&ParamVector::mean_of(&refs).unwrap(), &mut global, beta).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
        }
    }

    #[test]
    fn density_maps_into_range(d in 0.0f64..=1.0, c in 1usize..10_000) {
        let k = density_to_k(d, c);
        prop_assert!(k >= 1 && k <= c);
    }

    #[test]
    fn dataset_round_trip(n in 1usize..50, dim in 1usize..8, classes in 2usize..6, shards in 1usize..4, seed: u64) {
        prop_assume!(n >= shards);
        let mut rng = Rng::new(seed, 0);
        let data = LabeledData {
            inputs: (0..n * dim).map(|_| rng.normal() as f32).collect(),
            labels: (0..n).map(|_| rng.below(classes) as u32).collect(),
            input_dim: dim,
            n_classes: classes,
        };
        let ds = ShardedDataset::new(data, shards).unwrap();
        let back = decode_dataset(&encode_dataset(&ds)).unwrap();
        prop_assert_eq!(back.data.inputs, ds.data.inputs);
        prop_assert_eq!(back.data.labels, ds.data.labels);
        prop_assert_eq!(back.num_shards, shards);
    }

    #[test]
    fn dataset_decoder_rejects_garbage_without_panicking(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = decode_dataset(&bytes);
    }
}
