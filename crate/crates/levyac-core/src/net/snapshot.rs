use alloc::vec::Vec;

use crate::{Error, Result};

use super::resnet::ResNet;

/// Architecture description plus the flat parameter vector of a network.
/// Round-trips through [`ResNet::snapshot`] / [`ResNet::from_snapshot`]
/// reproduce parameters bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSnapshot {
    pub state_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub out_dim: usize,
    pub has_bound: bool,
    pub values: Vec<f64>,
}

impl ResNet {
    pub fn snapshot(&self) -> ParameterSnapshot {
        ParameterSnapshot {
            state_dim: self.state_dim(),
            width: self.width(),
            blocks: self.blocks(),
            out_dim: self.out_dim(),
            has_bound: self.has_bound(),
            values: self.params().to_vec(),
        }
    }

    pub fn from_snapshot(snap: &ParameterSnapshot) -> Result<Self> {
        let bound = snap.has_bound.then_some(0.0);
        let mut net = ResNet::zeros(snap.state_dim, snap.width, snap.blocks, snap.out_dim, bound)?;
        net.restore(snap)?;
        Ok(net)
    }

    /// Loads parameter values from a snapshot with matching architecture.
    pub fn restore(&mut self, snap: &ParameterSnapshot) -> Result<()> {
        let matches = snap.state_dim == self.state_dim()
            && snap.width == self.width()
            && snap.blocks == self.blocks()
            && snap.out_dim == self.out_dim()
            && snap.has_bound == self.has_bound()
            && snap.values.len() == self.param_count();
        if !matches {
            return Err(Error::InvalidArgument("snapshot does not match architecture"));
        }
        self.params_mut().copy_from_slice(&snap.values);
        Ok(())
    }
}
