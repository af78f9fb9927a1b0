// SPDX-License-Identifier: Apache-2.0

//! Parameter checkpoints: one line of JSON header, then the flattened
//! parameters as little-endian `f64`.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::network::{Activation, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let header = CheckpointHeader {
        layer_dims: net.layer_dims().to_vec(),
        activation: net.activation(),
        seed: net.seed(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in net.params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Network> {
    let mut reader = BufReader::new(r);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header: CheckpointHeader = serde_json::from_slice(&line)?;
    let mut net = Network::zeros(&header.layer_dims, header.activation, header.seed)?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    if body.len() != net.param_count() * 8 {
        return Err(Error::Parse {
            offset: line.len() + body.len(),
            msg: format!(
                "expected {} parameter bytes, found {}",
                net.param_count() * 8,
                body.len()
            ),
        });
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    net.set_params(&params)?;
    Ok(net)
}
