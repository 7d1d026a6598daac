//! Recurrent cells: vector LSTM, ConvLSTM and the cascaded-memory ConvLSTM.
//!
//! All convolutional cells are built from one primitive, a gated memory
//! transition: gates are computed from an input stream and a recurrent stream,
//! a memory map is updated as `m' = f * m + i * u`, and the module emits
//! `o * tanh(m')`. ConvLSTM is this transition over `(x, h, c)`. The cascaded
//! cell chains two of them in place of the outer forget path.

mod cascaded;
mod gates;
mod vanilla;

pub use cascaded::{
    cascaded_cell_step, convlstm_step, nonstationary_step, stationary_step, CascadedState,
    CellCache, ConvLstmState, StateGrad,
};
pub use gates::GateParams;
pub use vanilla::{vanilla_lstm_backward, vanilla_lstm_step, VanillaGrads, VanillaParams, VanillaState};

pub(crate) use cascaded::{cell_backward, cell_forward, module_backward, module_forward};

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::Scalar;

/// Which recurrent cell a layer runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellFlavor {
    ConvLstm,
    Cascaded,
}

impl CellFlavor {
    pub fn code(self) -> u32 {
        match self {
            CellFlavor::ConvLstm => 1,
            CellFlavor::Cascaded => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(CellFlavor::ConvLstm),
            2 => Some(CellFlavor::Cascaded),
            _ => None,
        }
    }
}

/// Weights of one convolutional cell layer.
///
/// The cascaded flavor's outer group holds only the u, i, o gates since its
/// forget path is replaced by the two inner modules.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams<T> {
    pub flavor: CellFlavor,
    pub outer: GateParams<T>,
    pub nonstationary: Option<GateParams<T>>,
    pub stationary: Option<GateParams<T>>,
}

impl<T: Scalar> CellParams<T> {
    pub fn zeros(flavor: CellFlavor, in_channels: usize, hidden: usize, kernel: usize) -> Self {
        match flavor {
            CellFlavor::ConvLstm => CellParams {
                flavor,
                outer: GateParams::zeros(4, in_channels, hidden, kernel),
                nonstationary: None,
                stationary: None,
            },
            CellFlavor::Cascaded => CellParams {
                flavor,
                outer: GateParams::zeros(3, in_channels, hidden, kernel),
                nonstationary: Some(GateParams::zeros(4, in_channels, hidden, kernel)),
                stationary: Some(GateParams::zeros(4, hidden, hidden, kernel)),
            },
        }
    }

    /// Kernels uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(
        flavor: CellFlavor,
        in_channels: usize,
        hidden: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(flavor, in_channels, hidden, kernel);
        p.outer.randomize(rng);
        if let Some(g) = p.nonstationary.as_mut() {
            g.randomize(rng);
        }
        if let Some(g) = p.stationary.as_mut() {
            g.randomize(rng);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.outer.hidden()
    }

    pub fn in_channels(&self) -> usize {
        self.outer.input_kernel.dims()[1]
    }

    pub(crate) fn nonstationary(&self) -> Result<&GateParams<T>> {
        self.nonstationary
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("cell has no non-stationary module".into()))
    }

    pub(crate) fn stationary(&self) -> Result<&GateParams<T>> {
        self.stationary
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("cell has no stationary module".into()))
    }
}

impl<T: Scalar> Parameters<T> for CellParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.outer.visit(&join(prefix, "outer"), f);
        if let Some(g) = &self.nonstationary {
            g.visit(&join(prefix, "nonstat"), f);
        }
        if let Some(g) = &self.stationary {
            g.visit(&join(prefix, "stat"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.outer.visit_mut(&join(prefix, "outer"), f);
        if let Some(g) = &mut self.nonstationary {
            g.visit_mut(&join(prefix, "nonstat"), f);
        }
        if let Some(g) = &mut self.stationary {
            g.visit_mut(&join(prefix, "stat"), f);
        }
    }
}
