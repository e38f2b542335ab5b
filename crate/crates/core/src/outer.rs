//! Outer-step update rules for the local-update algorithm family.
//!
//! Every function here is a pure step on explicit state: pseudo-gradients in,
//! parameters and accumulators out. Replica parameter copies are updated
//! identically from a shared aggregate, so they stay bit-identical.

use thiserror::Error;

use crate::compress::{compress, CompressError, Compressed, CompressorConfig};
use crate::tensor::{check_len, ChunkLayout, ParamVector, Real, Rng, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OuterError {
    #[error("replica {replica} parameters differ from replica 0 at the start of an outer step")]
    Desynchronized { replica: usize },
    #[error("expected {expected} replicas, got {got}")]
    ReplicaCount { expected: usize, got: usize },
    #[error("no replicas")]
    NoReplicas,
    #[error("fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Compress(#[from] CompressError),
}

/// `prev - current`: the displacement a replica accumulated over its inner loop.
pub fn pseudo_gradient<T: Real>(prev: &ParamVector<T>, current: &ParamVector<T>) -> Result<ParamVector<T>, OuterError> {
    Ok(prev.sub(current)?)
}

/// Fails unless every replica holds exactly the same parameters.
pub fn check_synchronized<T: Real>(thetas: &[ParamVector<T>]) -> Result<(), OuterError> {
    let first = thetas.first().ok_or(OuterError::NoReplicas)?;
    for (r, t) in thetas.iter().enumerate().skip(1) {
        if t.as_slice() != first.as_slice() {
            return Err(OuterError::Desynchronized { replica: r });
        }
    }
    Ok(())
}

fn check_counts(expected: usize, got: usize) -> Result<(), OuterError> {
    if expected == 0 {
        return Err(OuterError::NoReplicas);
    }
    if expected != got {
        return Err(OuterError::ReplicaCount { expected, got });
    }
    Ok(())
}

/// `theta -= alpha * direction` on every replica copy.
pub fn apply_update<T: Real>(thetas: &mut [ParamVector<T>], alpha: T, direction: &ParamVector<T>) -> Result<(), OuterError> {
    for t in thetas.iter_mut() {
        t.axpy_in_place(-alpha, direction)?;
    }
    Ok(())
}

/// Nesterov direction: `m <- beta m + g`, returns `g + beta m`.
pub fn nesterov_direction<T: Real>(
    grad: &ParamVector<T>,
    momentum: &mut ParamVector<T>,
    beta: T,
) -> Result<ParamVector<T>, OuterError> {
    check_len(grad.len(), momentum.len())?;
    momentum.scale_in_place(beta);
    momentum.add_assign(grad)?;
    let mut dir = grad.clone();
    dir.axpy_in_place(beta, momentum)?;
    Ok(dir)
}

/// Global Nesterov outer step: `m <- beta m + mean_delta`,
/// `theta <- theta - alpha (mean_delta + beta m)`.
pub fn diloco_outer<T: Real>(
    theta: &mut ParamVector<T>,
    mean_delta: &ParamVector<T>,
    momentum: &mut ParamVector<T>,
    beta: T,
    alpha: T,
) -> Result<(), OuterError> {
    let dir = nesterov_direction(mean_delta, momentum, beta)?;
    theta.axpy_in_place(-alpha, &dir)?;
    Ok(())
}

/// Local outer momentum: each replica runs the Nesterov recurrence on its own
/// pseudo-gradient; only the resulting directions are averaged.
///
/// Returns the averaged direction that was applied.
pub fn lom_outer<T: Real>(
    theta: &mut ParamVector<T>,
    deltas: &[ParamVector<T>],
    momenta: &mut [ParamVector<T>],
    beta: T,
    alpha: T,
) -> Result<ParamVector<T>, OuterError> {
    let dir = lom_direction(deltas, momenta, beta)?;
    theta.axpy_in_place(-alpha, &dir)?;
    Ok(dir)
}

pub fn lom_direction<T: Real>(
    deltas: &[ParamVector<T>],
    momenta: &mut [ParamVector<T>],
    beta: T,
) -> Result<ParamVector<T>, OuterError> {
    check_counts(deltas.len(), momenta.len())?;
    let mut local = Vec::with_capacity(deltas.len());
    for (d, m) in deltas.iter().zip(momenta.iter_mut()) {
        local.push(nesterov_direction(d, m, beta)?);
    }
    let refs: Vec<&ParamVector<T>> = local.iter().collect();
    Ok(ParamVector::mean_of(&refs)?)
}

/// Zeroes the top `fraction` of each chunk's entries by magnitude.
pub fn lom_subk<T: Real>(momentum: &mut ParamVector<T>, layout: &ChunkLayout, fraction: f64) -> Result<(), OuterError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(OuterError::Fraction(fraction));
    }
    check_len(momentum.len(), layout.len)?;
    let k = (fraction * layout.chunk_size as f64).round() as usize;
    if k == 0 {
        return Ok(());
    }
    let data = momentum.as_mut_slice();
    for range in layout.ranges() {
        let start = range.start;
        let chunk = &mut data[range];
        for i in crate::compress::topk_indices(chunk, k) {
            chunk[i as usize] = T::zero();
        }
        let _ = start;
    }
    Ok(())
}

/// What one error-feedback outer step produced.
#[derive(Debug, Clone)]
pub struct SparseStep<T> {
    /// Per-replica compressed messages (what each replica transmits).
    pub messages: Vec<Compressed<T>>,
    /// `(1/R) * sum_r decompress(message_r)`.
    pub aggregate: ParamVector<T>,
}

/// Error feedback + compression + averaging, shared by SparseLoCo and its ablations.
///
/// For each replica: `e <- beta e + delta`, `msg = Q(select_k(e))`,
/// `e <- e - decompress(msg)`. Returns the messages and their mean.
pub fn ef_compress_aggregate<T: Real>(
    deltas: &[ParamVector<T>],
    errors: &mut [ParamVector<T>],
    beta: T,
    compressor: &CompressorConfig,
    rngs: &mut [Rng],
) -> Result<SparseStep<T>, OuterError> {
    let r = deltas.len();
    check_counts(r, errors.len())?;
    check_counts(r, rngs.len())?;
    let mut messages = Vec::with_capacity(r);
    for ((d, e), rng) in deltas.iter().zip(errors.iter_mut()).zip(rngs.iter_mut()) {
        check_len(d.len(), e.len())?;
        e.scale_in_place(beta);
        e.add_assign(d)?;
        let msg = compress(e, compressor, rng)?;
        let sent = msg.to_dense();
        e.sub_assign(&sent)?;
        messages.push(msg);
    }
    let len = deltas[0].len();
    let mut aggregate = ParamVector::zeros(len);
    for m in &messages {
        m.add_into(&mut aggregate)?;
    }
    aggregate.scale_in_place(T::one() / T::lit(r as f64));
    Ok(SparseStep { messages, aggregate })
}

/// SparseLoCo outer step: error-feedback compression, sparse averaging over
/// all `R` replicas, and a plain `theta_r <- theta_r - alpha * aggregate` on
/// every replica.
#[allow(clippy::too_many_arguments)]
pub fn sparseloco_outer_step<T: Real>(
    thetas: &mut [ParamVector<T>],
    deltas: &[ParamVector<T>],
    errors: &mut [ParamVector<T>],
    beta: T,
    alpha: T,
    compressor: &CompressorConfig,
    rngs: &mut [Rng],
) -> Result<SparseStep<T>, OuterError> {
    check_counts(thetas.len(), deltas.len())?;
    check_synchronized(thetas)?;
    let step = ef_compress_aggregate(deltas, errors, beta, compressor, rngs)?;
    apply_update(thetas, alpha, &step.aggregate)?;
    Ok(step)
}

/// SparseLoCo with a global Nesterov momentum on top of the sparse aggregate.
#[allow(clippy::too_many_arguments)]
pub fn sparseloco_plus_nesterov_step<T: Real>(
    thetas: &mut [ParamVector<T>],
    deltas: &[ParamVector<T>],
    errors: &mut [ParamVector<T>],
    momentum: &mut ParamVector<T>,
    ef_beta: T,
    nesterov_beta: T,
    alpha: T,
    compressor: &CompressorConfig,
    rngs: &mut [Rng],
) -> Result<SparseStep<T>, OuterError> {
    check_counts(thetas.len(), deltas.len())?;
    check_synchronized(thetas)?;
    let step = ef_compress_aggregate(deltas, errors, ef_beta, compressor, rngs)?;
    let dir = nesterov_direction(&step.aggregate, momentum, nesterov_beta)?;
    apply_update(thetas, alpha, &dir)?;
    Ok(step)
}

/// Elementwise sign with `sign(0) = 0`.
pub fn sign<T: Real>(v: &ParamVector<T>) -> ParamVector<T> {
    let mut out = v.clone();
    for x in out.as_mut_slice() {
        *x = if *x > T::zero() {
            T::one()
        } else if *x < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
    }
    out
}

/// Single-step error-feedback compression of raw gradients followed by a
/// sign-descent update `theta <- theta - alpha * sign(aggregate)`.
pub fn demo_lite_step<T: Real>(
    thetas: &mut [ParamVector<T>],
    grads: &[ParamVector<T>],
    errors: &mut [ParamVector<T>],
    beta: T,
    alpha: T,
    compressor: &CompressorConfig,
    rngs: &mut [Rng],
) -> Result<SparseStep<T>, OuterError> {
    check_counts(thetas.len(), grads.len())?;
    check_synchronized(thetas)?;
    let step = ef_compress_aggregate(grads, errors, beta, compressor, rngs)?;
    apply_update(thetas, alpha, &sign(&step.aggregate))?;
    Ok(step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::{QuantSpec, Selection};

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::from_f64(v)
    }

    fn random(rng: &mut Rng, n: usize) -> ParamVector<f64> {
        ParamVector::new((0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn dense(c: usize) -> CompressorConfig {
        CompressorConfig { chunk_size: c, k: c, selection: Selection::TopK, dct: false, quant: QuantSpec::full() }
    }

    #[test]
    fn pseudo_gradient_examples() {
        assert!(pseudo_gradient(&pv(&[1., 2.]), &pv(&[1., 2.])).unwrap().is_zero());
        assert_eq!(pseudo_gradient(&pv(&[1., 1.]), &pv(&[0.5, 2.])).unwrap(), pv(&[0.5, -1.]));
        // One SGD step theta - eta * g gives back eta * g.
        let theta = pv(&[0.25, -0.5]);
        let g = pv(&[0.5, 2.0]);
        let mut after = theta.clone();
        after.axpy_in_place(-0.125, &g).unwrap();
        assert_eq!(pseudo_gradient(&theta, &after).unwrap(), pv(&[0.0625, 0.25]));
    }

    #[test]
    fn diloco_examples() {
        let d = pv(&[1.0, -2.0]);
        let mut theta = pv(&[0.0, 0.0]);
        let mut m = pv(&[0.0, 0.0]);
        diloco_outer(&mut theta, &d, &mut m, 0.0, 0.5).unwrap();
        assert_eq!(theta, pv(&[-0.5, 1.0]));

        let mut theta = pv(&[0.0, 0.0]);
        let mut m = pv(&[0.0, 0.0]);
        diloco_outer(&mut theta, &d, &mut m, 0.9, 1.0).unwrap();
        assert!(theta.max_abs_diff(&pv(&[-1.9, 3.8])).unwrap() < 1e-15);
    }

    #[test]
    fn diloco_two_step_unroll() {
        // Step 1: m=d, dir=1.9d. Step 2: m=1.9d, dir=d+0.9*1.9d.
        let d = pv(&[1.0]);
        let mut theta = pv(&[0.0]);
        let mut m = pv(&[0.0]);
        diloco_outer(&mut theta, &d, &mut m, 0.9, 1.0).unwrap();
        diloco_outer(&mut theta, &d, &mut m, 0.9, 1.0).unwrap();
        assert!((theta[0] + (1.9 + 1.0 + 0.9 * 1.9)).abs() < 1e-14);
    }

    #[test]
    fn lom_collapses_to_diloco() {
        let mut rng = Rng::new(1, 0);
        // R = 1
        let mut t1 = random(&mut rng, 10);
        let mut t2 = t1.clone();
        let mut m_global = ParamVector::zeros(10);
        let mut m_local = vec![ParamVector::zeros(10)];
        for _ in 0..5 {
            let d = random(&mut rng, 10);
            diloco_outer(&mut t1, &d, &mut m_global, 0.9, 0.7).unwrap();
            lom_outer(&mut t2, &[d], &mut m_local, 0.9, 0.7).unwrap();
        }
        assert!(t1.max_abs_diff(&t2).unwrap() < 1e-12);

        // Equal deltas across replicas.
        let mut m_local = vec![ParamVector::zeros(10); 4];
        let mut m_global = ParamVector::zeros(10);
        for _ in 0..5 {
            let d = random(&mut rng, 10);
            diloco_outer(&mut t1, &d, &mut m_global, 0.9, 0.7).unwrap();
            lom_outer(&mut t2, &vec![d; 4], &mut m_local, 0.9, 0.7).unwrap();
        }
        assert!(t1.max_abs_diff(&t2).unwrap() < 1e-12);
    }

    #[test]
    fn lom_matches_diloco_on_random_deltas() {
        let mut rng = Rng::new(2, 0);
        let r = 5;
        let mut t_global = random(&mut rng, 64);
        let mut t_local = t_global.clone();
        let mut m_global = ParamVector::zeros(64);
        let mut m_local = vec![ParamVector::zeros(64); r];
        for _ in 0..50 {
            let deltas: Vec<_> = (0..r).map(|_| random(&mut rng, 64)).collect();
            let refs: Vec<_> = deltas.iter().collect();
            let mean = ParamVector::mean_of(&refs).unwrap();
            diloco_outer(&mut t_global, &mean, &mut m_global, 0.9, 0.6).unwrap();
            lom_outer(&mut t_local, &deltas, &mut m_local, 0.9, 0.6).unwrap();
            let scale = t_global.norm_inf().max(1.0);
            assert!(t_global.max_abs_diff(&t_local).unwrap() / scale < 1e-12);
        }
        assert!(matches!(lom_outer(&mut t_local, &[pv(&[0.0; 64])], &mut m_local, 0.9, 0.6), Err(OuterError::ReplicaCount { .. })));
    }

    #[test]
    fn subk_examples() {
        let layout = ChunkLayout::new(4, 4).unwrap();
        let mut m = pv(&[4., -3., 2., 1.]);
        lom_subk(&mut m, &layout, 0.0).unwrap();
        assert_eq!(m, pv(&[4., -3., 2., 1.]));
        lom_subk(&mut m, &layout, 0.25).unwrap();
        assert_eq!(m, pv(&[0., -3., 2., 1.]));
        lom_subk(&mut m, &layout, 1.0).unwrap();
        assert!(m.is_zero());
        assert!(lom_subk(&mut m, &layout, 1.5).is_err());
    }

    #[test]
    fn dense_sparseloco_is_outer_sgd() {
        let mut rng = Rng::new(3, 0);
        let r = 3;
        let theta0 = random(&mut rng, 50);
        let mut thetas = vec![theta0.clone(); r];
        let mut sgd = theta0;
        let mut errors = vec![ParamVector::zeros(50); r];
        let mut rngs: Vec<Rng> = (0..r).map(|i| Rng::new(0, i as u64)).collect();
        for _ in 0..20 {
            let deltas: Vec<_> = (0..r).map(|_| random(&mut rng, 50)).collect();
            let step = sparseloco_outer_step(&mut thetas, &deltas, &mut errors, 0.95, 1.0, &dense(16), &mut rngs).unwrap();
            assert!(errors.iter().all(|e| e.is_zero()));
            for (m, d) in step.messages.iter().zip(&deltas) {
                assert_eq!(&m.to_dense(), d);
            }
            let refs: Vec<_> = deltas.iter().collect();
            let mean = ParamVector::mean_of(&refs).unwrap();
            sgd.axpy_in_place(-1.0, &mean).unwrap();
            assert!(thetas[0].max_abs_diff(&sgd).unwrap() < 1e-12);
            check_synchronized(&thetas).unwrap();
        }
    }

    #[test]
    fn zero_deltas_never_move() {
        let theta0 = pv(&[1.0, 2.0, 3.0, 4.0]);
        let mut thetas = vec![theta0.clone(); 2];
        let mut errors = vec![ParamVector::zeros(4); 2];
        let mut rngs = vec![Rng::new(0, 0), Rng::new(0, 1)];
        let cfg = CompressorConfig { chunk_size: 2, k: 1, selection: Selection::TopK, dct: false, quant: QuantSpec::new(2).unwrap() };
        for _ in 0..5 {
            let zeros = vec![ParamVector::zeros(4); 2];
            let step = sparseloco_outer_step(&mut thetas, &zeros, &mut errors, 0.95, 1.0, &cfg, &mut rngs).unwrap();
            assert!(step.messages.iter().all(|m| m.to_dense().is_zero()));
        }
        assert_eq!(thetas[0], theta0);
    }

    #[test]
    fn desynchronized_input_is_rejected() {
        let mut thetas = vec![pv(&[1.0]), pv(&[1.5])];
        let mut errors = vec![ParamVector::zeros(1); 2];
        let mut rngs = vec![Rng::new(0, 0), Rng::new(0, 1)];
        let deltas = vec![pv(&[0.0]); 2];
        assert_eq!(
            sparseloco_outer_step(&mut thetas, &deltas, &mut errors, 0.9, 1.0, &dense(1), &mut rngs).unwrap_err(),
            OuterError::Desynchronized { replica: 1 }
        );
    }

    #[test]
    fn nesterov_variant_reductions() {
        let mut rng = Rng::new(4, 0);
        let r = 2;
        let theta0 = random(&mut rng, 32);
        let cfg = CompressorConfig { chunk_size: 8, k: 2, selection: Selection::TopK, dct: false, quant: QuantSpec::new(2).unwrap() };
        let (mut a, mut b) = (vec![theta0.clone(); r], vec![theta0.clone(); r]);
        let (mut ea, mut eb) = (vec![ParamVector::zeros(32); r], vec![ParamVector::zeros(32); r]);
        let mut m = ParamVector::zeros(32);
        let mut ra: Vec<Rng> = (0..r).map(|i| Rng::new(1, i as u64)).collect();
        let mut rb = ra.clone();
        for _ in 0..10 {
            let deltas: Vec<_> = (0..r).map(|_| random(&mut rng, 32)).collect();
            sparseloco_outer_step(&mut a, &deltas, &mut ea, 0.95, 0.8, &cfg, &mut ra).unwrap();
            sparseloco_plus_nesterov_step(&mut b, &deltas, &mut eb, &mut m, 0.95, 0.0, 0.8, &cfg, &mut rb).unwrap();
        }
        assert_eq!(a, b);

        // Dense + passthrough: Nesterov-on-aggregate equals DiLoCo.
        let mut c = vec![theta0.clone(); r];
        let mut ec = vec![ParamVector::zeros(32); r];
        let mut mc = ParamVector::zeros(32);
        let mut d = theta0;
        let mut md = ParamVector::zeros(32);
        let mut rc: Vec<Rng> = (0..r).map(|i| Rng::new(1, i as u64)).collect();
        for _ in 0..10 {
            let deltas: Vec<_> = (0..r).map(|_| random(&mut rng, 32)).collect();
            sparseloco_plus_nesterov_step(&mut c, &deltas, &mut ec, &mut mc, 0.95, 0.9, 0.6, &dense(8), &mut rc).unwrap();
            let refs: Vec<_> = deltas.iter().collect();
            diloco_outer(&mut d, &ParamVector::mean_of(&refs).unwrap(), &mut md, 0.9, 0.6).unwrap();
        }
        assert!(c[0].max_abs_diff(&d).unwrap() < 1e-12);
    }

    #[test]
    fn demo_lite_dense_limit_and_zero() {
        let theta0 = pv(&[0.0, 0.0, 0.0]);
        let mut thetas = vec![theta0.clone(); 2];
        let mut errors = vec![ParamVector::zeros(3); 2];
        let mut rngs = vec![Rng::new(0, 0), Rng::new(0, 1)];
        let g = pv(&[0.3, -2.0, 0.0]);
        demo_lite_step(&mut thetas, &[g.clone(), g.clone()], &mut errors, 0.0, 0.1, &dense(3), &mut rngs).unwrap();
        assert_eq!(thetas[0], pv(&[-0.1, 0.1, 0.0]));
        let before = thetas[0].clone();
        let zeros = vec![ParamVector::zeros(3); 2];
        let mut errors = vec![ParamVector::zeros(3); 2];
        demo_lite_step(&mut thetas, &zeros, &mut errors, 0.0, 0.1, &dense(3), &mut rngs).unwrap();
        assert_eq!(thetas[0], before);
    }
}
