use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rate_kernel::RateFunction;
use crate::rng;
use crate::transport::EmpiricalMeasure;

/// A discrete-time Markov kernel with optional drift data `(V, phi, K)`.
pub trait MarkovModel: Sync {
    type State: Clone + Send + Sync;

    /// One transition; must depend only on `x` and the stream.
    fn step(&self, x: &Self::State, rng: &mut ChaCha8Rng) -> Result<Self::State>;

    fn lyapunov(&self, _x: &Self::State) -> Option<f64> {
        None
    }

    fn rate(&self) -> Option<&RateFunction> {
        None
    }

    fn drift_constant(&self) -> Option<f64> {
        None
    }
}

/// A continuous-time process observed on a time grid.
pub trait ContinuousModel: Sync {
    type State: Clone + Send + Sync;

    /// Integrator step used when none is given.
    fn default_dt(&self) -> f64;

    /// States at each of the increasing `times`, integrating with step `dt`.
    fn trajectory(
        &self,
        x0: &Self::State,
        times: &[f64],
        dt: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Self::State>>;

    fn lyapunov(&self, _x: &Self::State) -> Option<f64> {
        None
    }
}

/// The chain `(X_{n t0})` of a continuous-time model.
pub struct Skeleton<C> {
    pub model: C,
    pub t0: f64,
    pub dt: f64,
}

impl<C: ContinuousModel> MarkovModel for Skeleton<C> {
    type State = C::State;

    fn step(&self, x: &C::State, rng: &mut ChaCha8Rng) -> Result<C::State> {
        let mut path = self.model.trajectory(x, &[self.t0], self.dt, rng)?;
        Ok(path.pop().expect("one time requested"))
    }

    fn lyapunov(&self, x: &C::State) -> Option<f64> {
        self.model.lyapunov(x)
    }
}

pub type StateFn<S> = Arc<dyn Fn(&S) -> f64 + Send + Sync>;

/// Attaches `V`, and optionally `phi` and `K`, to a model.
pub struct WithLyapunov<M: MarkovModel> {
    pub model: M,
    pub v: StateFn<M::State>,
    pub phi: Option<RateFunction>,
    pub k: Option<f64>,
}

impl<M: MarkovModel> WithLyapunov<M> {
    pub fn new(model: M, v: impl Fn(&M::State) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            model,
            v: Arc::new(v),
            phi: None,
            k: None,
        }
    }

    pub fn with_drift(mut self, phi: RateFunction, k: f64) -> Self {
        self.phi = Some(phi);
        self.k = Some(k);
        self
    }
}

impl<M: MarkovModel> MarkovModel for WithLyapunov<M> {
    type State = M::State;

    fn step(&self, x: &M::State, rng: &mut ChaCha8Rng) -> Result<M::State> {
        self.model.step(x, rng)
    }

    fn lyapunov(&self, x: &M::State) -> Option<f64> {
        Some((self.v)(x))
    }

    fn rate(&self) -> Option<&RateFunction> {
        self.phi.as_ref()
    }

    fn drift_constant(&self) -> Option<f64> {
        self.k
    }
}

/// A user-defined kernel given as a closure.
pub struct KernelChain<S, F> {
    kernel: F,
    _state: std::marker::PhantomData<fn() -> S>,
}

impl<S, F> KernelChain<S, F>
where
    F: Fn(&S, &mut ChaCha8Rng) -> Result<S> + Sync,
{
    pub fn new(kernel: F) -> Self {
        Self {
            kernel,
            _state: std::marker::PhantomData,
        }
    }
}

impl<S, F> MarkovModel for KernelChain<S, F>
where
    S: Clone + Send + Sync,
    F: Fn(&S, &mut ChaCha8Rng) -> Result<S> + Sync,
{
    type State = S;
    fn step(&self, x: &S, rng: &mut ChaCha8Rng) -> Result<S> {
        (self.kernel)(x, rng)
    }
}

/// Runs `n` steps from `x0` on `rng`.
pub fn run_chain<M: MarkovModel>(
    model: &M,
    x0: &M::State,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<M::State> {
    let mut x = x0.clone();
    for _ in 0..n {
        x = model.step(&x, rng)?;
    }
    Ok(x)
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    Ok(())
}

/// Equal-weight sample of `P^n(x0, ·)`; sample `i` uses stream `i`.
pub fn sample_marginal<M: MarkovModel>(
    model: &M,
    x0: &M::State,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<EmpiricalMeasure<M::State>> {
    check_samples(n_samples)?;
    let points = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| run_chain(model, x0, n, &mut rng::stream(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::uniform(points)
}

/// Equal-weight sample of `P^t(x0, ·)`.
pub fn sample_marginal_continuous<C: ContinuousModel>(
    model: &C,
    x0: &C::State,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EmpiricalMeasure<C::State>> {
    check_samples(n_samples)?;
    let dt = model.default_dt();
    let points = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut path = model.trajectory(x0, &[t], dt, &mut rng::stream(seed, i))?;
            Ok(path.pop().expect("one time requested"))
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::uniform(points)
}

/// `n_samples` independent trajectories observed at `times`, indexed
/// `[sample][time]`.
pub fn sample_paths<C: ContinuousModel>(
    model: &C,
    x0: &C::State,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<C::State>>> {
    check_samples(n_samples)?;
    let dt = model.default_dt();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| model.trajectory(x0, times, dt, &mut rng::stream(seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{DecimalState, DigitShiftChain, ExactDigitChain};
    use crate::transport::{wasserstein_1d_to_uniform, EmpiricalMeasure};

    #[test]
    fn zero_steps_is_a_point_mass() {
        let m = sample_marginal(&DigitShiftChain, &0.42, 0, 50, 1).unwrap();
        assert!(m.points().iter().all(|p| *p == 0.42));
    }

    #[test]
    fn one_step_support_is_the_ten_digits() {
        let m = sample_marginal(&ExactDigitChain, &DecimalState::zero(), 1, 2000, 5)
            .unwrap()
            .compress();
        assert_eq!(m.len(), 10);
        for w in m.weights() {
            assert!((w - 0.1).abs() < 0.03);
        }
    }

    #[test]
    fn reproducible_under_seed() {
        let a = sample_marginal(&DigitShiftChain, &0.3, 5, 100, 9).unwrap();
        let b = sample_marginal(&DigitShiftChain, &0.3, 5, 100, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_run_marginal_is_near_uniform() {
        let m = sample_marginal(&DigitShiftChain, &0.3, 20, 4000, 2).unwrap();
        let mut xs = m.points().to_vec();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x - i as f64 / n).abs().max((x - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 1.36 / n.sqrt() * 1.5, "KS {ks}");
        let w =
            wasserstein_1d_to_uniform(&EmpiricalMeasure::uniform(xs).unwrap(), 0.0, 1.0).unwrap();
        assert!(w < 0.03);
    }

    #[test]
    fn lyapunov_wrapper_exposes_drift_data() {
        let m = WithLyapunov::new(DigitShiftChain, |x: &f64| *x)
            .with_drift(RateFunction::linear(0.9).unwrap(), 0.45);
        assert_eq!(m.lyapunov(&0.5), Some(0.5));
        assert_eq!(m.drift_constant(), Some(0.45));
        assert!(DigitShiftChain.lyapunov(&0.5).is_none());
    }
}
