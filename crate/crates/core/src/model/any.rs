use crate::baselines::{BiLstmBaseline, LstmBaseline};
use crate::error::Result;
use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

use super::{Architecture, Channel, StressNet, Surrogate};

/// Any trainable surrogate, for code that picks the architecture at run time.
#[derive(Debug, Clone)]
pub enum AnyModel {
    StressNet(StressNet),
    Lstm(LstmBaseline),
    BiLstm(BiLstmBaseline),
}

impl AnyModel {
    fn inner(&self) -> &dyn Surrogate {
        match self {
            AnyModel::StressNet(m) => m,
            AnyModel::Lstm(m) => m,
            AnyModel::BiLstm(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Surrogate {
        match self {
            AnyModel::StressNet(m) => m,
            AnyModel::Lstm(m) => m,
            AnyModel::BiLstm(m) => m,
        }
    }
}

impl From<StressNet> for AnyModel {
    fn from(m: StressNet) -> Self {
        AnyModel::StressNet(m)
    }
}

impl From<LstmBaseline> for AnyModel {
    fn from(m: LstmBaseline) -> Self {
        AnyModel::Lstm(m)
    }
}

impl From<BiLstmBaseline> for AnyModel {
    fn from(m: BiLstmBaseline) -> Self {
        AnyModel::BiLstm(m)
    }
}

impl Surrogate for AnyModel {
    fn architecture(&self) -> Architecture {
        self.inner().architecture()
    }

    fn channel(&self) -> Channel {
        self.inner().channel()
    }

    fn delta_t(&self) -> usize {
        self.inner().delta_t()
    }

    fn uses_damage(&self) -> bool {
        self.inner().uses_damage()
    }

    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().params_mut()
    }

    fn predict(&self, stress: &[f64], damage: Option<&Tensor>) -> Result<f64> {
        self.inner().predict(stress, damage)
    }

    fn predict_with_grad(
        &self,
        stress: &[f64],
        damage: Option<&Tensor>,
        loss: &dyn Fn(f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64, Gradients)> {
        self.inner().predict_with_grad(stress, damage, loss)
    }
}
