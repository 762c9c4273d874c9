//! Material backends behind one interface, selected by name.
//!
//! A backend evaluates the stress (and optionally the spatial tangent) of a
//! material point for a trial deformation gradient without mutating the
//! point; the returned trial is committed once the step is accepted.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::material::{integrate_step, tangent, Environment, MaterialParams, MaterialState};
use crate::surrogate::{NetworkParams, SurrogatePoint, SurrogateTrial};
use crate::tensor3::{voigt_pack_unchecked, Tangent66, Tensor2, Voigt6};

/// Stored state of one material point.
#[derive(Debug, Clone, PartialEq)]
pub enum PointRecord {
    Classical(MaterialState),
    Surrogate(SurrogatePoint),
}

/// Candidate state produced by an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum PointTrial {
    Classical(MaterialState),
    Surrogate(SurrogateTrial),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResponse {
    /// Damaged Cauchy stress, MPa.
    pub stress: Voigt6,
    /// Undamaged Cauchy stress, MPa.
    pub undamaged: Voigt6,
    /// Spatial tangent; zero unless requested.
    pub tangent: Tangent66,
    pub d: f64,
    /// Fixed-point sweeps (classical) or network steps (surrogate).
    pub iterations: usize,
    pub trial: PointTrial,
}

pub trait MaterialBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn material(&self) -> &MaterialParams;

    fn new_record(&self) -> PointRecord;

    fn evaluate(
        &self,
        record: &PointRecord,
        f: &Tensor2,
        dt: f64,
        env: &Environment,
        with_tangent: bool,
    ) -> Result<PointResponse>;

    /// Replaces `record` by the accepted trial.
    fn commit(&self, record: &mut PointRecord, trial: PointTrial) -> Result<()> {
        match (record, trial) {
            (PointRecord::Classical(state), PointTrial::Classical(next)) => *state = next,
            (PointRecord::Surrogate(point), PointTrial::Surrogate(next)) => point.accept(next),
            _ => return Err(Error::RecordMismatch { backend: self.name().into() }),
        }
        Ok(())
    }
}

/// The iterative backward-Euler integrator.
#[derive(Debug, Clone)]
pub struct ClassicalBackend {
    pub params: MaterialParams,
}

impl MaterialBackend for ClassicalBackend {
    fn name(&self) -> &'static str {
        "classical"
    }

    fn material(&self) -> &MaterialParams {
        &self.params
    }

    fn new_record(&self) -> PointRecord {
        PointRecord::Classical(MaterialState::virgin())
    }

    fn evaluate(&self, record: &PointRecord, f: &Tensor2, dt: f64, env: &Environment, with_tangent: bool) -> Result<PointResponse> {
        let PointRecord::Classical(state) = record else {
            return Err(Error::RecordMismatch { backend: self.name().into() });
        };
        let step = integrate_step(state, f, dt, env, &self.params)?;
        let c = if with_tangent {
            tangent(state, f, dt, env, &self.params)?
        } else {
            Tangent66::zeros()
        };
        Ok(PointResponse {
            stress: voigt_pack_unchecked(&step.stress.sigma_tot_d),
            undamaged: voigt_pack_unchecked(&step.stress.sigma_tot),
            tangent: c,
            d: step.state.d,
            iterations: step.iterations,
            trial: PointTrial::Classical(step.state),
        })
    }
}

/// The trained LSTM network with damage applied outside it.
#[derive(Debug, Clone)]
pub struct SurrogateBackend {
    pub params: MaterialParams,
    pub network: Arc<NetworkParams>,
}

impl MaterialBackend for SurrogateBackend {
    fn name(&self) -> &'static str {
        "surrogate"
    }

    fn material(&self) -> &MaterialParams {
        &self.params
    }

    fn new_record(&self) -> PointRecord {
        PointRecord::Surrogate(SurrogatePoint::new(self.network.hidden()))
    }

    fn evaluate(&self, record: &PointRecord, f: &Tensor2, dt: f64, env: &Environment, with_tangent: bool) -> Result<PointResponse> {
        let PointRecord::Surrogate(point) = record else {
            return Err(Error::RecordMismatch { backend: self.name().into() });
        };
        // the tangent comes with the stress at a fixed cost of seven network
        // steps, so it is always computed
        let (trial, eval) = point.evaluate(f, dt, env, &self.network, &self.params)?;
        Ok(PointResponse {
            stress: eval.stress,
            undamaged: eval.undamaged,
            tangent: if with_tangent { eval.tangent } else { Tangent66::zeros() },
            d: eval.d,
            iterations: 1,
            trial: PointTrial::Surrogate(trial),
        })
    }
}

type Factory = Box<dyn Fn(&MaterialParams, Option<Arc<NetworkParams>>) -> Result<Arc<dyn MaterialBackend>> + Send + Sync>;

/// Named backend constructors.
pub struct BackendRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry::empty();
        r.register("classical", |params, _| Ok(Arc::new(ClassicalBackend { params: params.clone() })));
        r.register("surrogate", |params, network| {
            let network = network.ok_or_else(|| Error::InvalidConfig("the surrogate backend needs trained weights".into()))?;
            network.check_shapes()?;
            Ok(Arc::new(SurrogateBackend {
                params: params.clone(),
                network,
            }))
        });
        r
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry { factories: BTreeMap::new() }
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&MaterialParams, Option<Arc<NetworkParams>>) -> Result<Arc<dyn MaterialBackend>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(
        &self,
        name: &str,
        params: &MaterialParams,
        network: Option<Arc<NetworkParams>>,
    ) -> Result<Arc<dyn MaterialBackend>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownBackend(name.to_string()))?;
        factory(params, network)
    }
}
