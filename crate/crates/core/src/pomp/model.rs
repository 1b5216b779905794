use super::params::ParameterSet;
use super::state::StateMatrix;
use crate::error::Result;
use crate::rng::StreamRng;

/// Parameters as seen by a model: either one shared value or one copy per unit.
///
/// Per-unit copies arise inside iterated block filtering, where each unit of
/// each particle carries its own perturbed parameter vector.
#[derive(Debug)]
pub struct UnitParams<'a, P> {
    values: &'a [P],
}

impl<P> Clone for UnitParams<'_, P> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<P> Copy for UnitParams<'_, P> {}

impl<'a, P> UnitParams<'a, P> {
    pub fn shared(p: &'a P) -> Self {
        Self {
            values: std::slice::from_ref(p),
        }
    }

    pub fn per_unit(values: &'a [P]) -> Self {
        assert!(!values.is_empty());
        Self { values }
    }

    #[inline]
    pub fn get(&self, u: usize) -> &'a P {
        if self.values.len() == 1 {
            &self.values[0]
        } else {
            &self.values[u]
        }
    }
}

/// The contract a spatiotemporal POMP model implements for simulation and filtering.
///
/// Measurement functions receive the current state and the state at the
/// previous observation time (`last`), so models whose observations count
/// events since the last report can difference accumulator compartments.
pub trait SpatPompModel: Send + Sync {
    /// Parameters resolved into whatever form the model evaluates fastest.
    type Params: Clone + Send + Sync;

    fn n_units(&self) -> usize;

    fn compartments(&self) -> &[&'static str];

    fn resolve(&self, set: &ParameterSet) -> Result<Self::Params>;

    fn rinit(&self, params: UnitParams<'_, Self::Params>, rng: &mut StreamRng) -> Result<StateMatrix>;

    /// Advances `state` from `t` to `t + dt` in place.
    fn rprocess_step(
        &self,
        state: &mut StateMatrix,
        t: f64,
        dt: f64,
        params: UnitParams<'_, Self::Params>,
        rng: &mut StreamRng,
    ) -> Result<()>;

    /// log P(Y_u = y | state) at observation time `t`.
    fn dmeasure_unit(
        &self,
        y: f64,
        u: usize,
        now: &StateMatrix,
        last: &StateMatrix,
        t: f64,
        params: &Self::Params,
    ) -> f64;

    fn rmeasure_unit(
        &self,
        u: usize,
        now: &StateMatrix,
        last: &StateMatrix,
        t: f64,
        params: &Self::Params,
        rng: &mut StreamRng,
    ) -> f64;

    /// E[Y_u | state].
    fn emeasure_unit(&self, u: usize, now: &StateMatrix, last: &StateMatrix, params: &Self::Params) -> f64;

    /// Var[Y_u | state], as used by the ensemble Kalman filter.
    fn vmeasure_unit(&self, u: usize, now: &StateMatrix, last: &StateMatrix, params: &Self::Params) -> f64;
}

/// Runs every Euler sub-step between observation `n - 1` and `n`.
pub(crate) fn advance<M: SpatPompModel>(
    model: &M,
    state: &mut StateMatrix,
    grid: &super::grid::TimeGrid,
    n: usize,
    params: UnitParams<'_, M::Params>,
    rng: &mut StreamRng,
) -> Result<()> {
    let dt = grid.dt();
    for t in grid.substeps(n) {
        model.rprocess_step(state, t, dt, params, rng)?;
    }
    Ok(())
}
