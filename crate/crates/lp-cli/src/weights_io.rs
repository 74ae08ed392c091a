//! Sized, versioned binary weights file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "LPWEIGHT"
//! version  u32      1
//! arch     u8       0 mlp, 1 rnn, 2 resnet, 3 resnet_tilde
//! act      u8       0 tanh, 1 sigmoid, 2 relu
//! loss     u8       0 squared_error, 1 softmax_cross_entropy
//! bias     u8       0 / 1
//! superv   u8       0 final, 1 all_steps
//! seq_len  u32
//! nwidths  u32      followed by that many u32 widths (d_0..d_H, d_out)
//! nw       u32      weight matrices, each: rows u32, cols u32, f64 data
//! nu       u32      recurrent matrices, same layout
//! ```

use lp_core::architectures::{ArchKind, NetworkSpec, Supervision};
use lp_core::{ActivationKind, LossKind, LpError, Matrix, WeightStore};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"LPWEIGHT";
const VERSION: u32 = 1;

pub fn save(path: &Path, spec: &NetworkSpec, weights: &WeightStore) -> Result<(), LpError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match spec.arch {
        ArchKind::Mlp => 0,
        ArchKind::Rnn => 1,
        ArchKind::ResNetDirect => 2,
        ArchKind::ResNetTilde => 3,
    });
    buf.push(match spec.activation {
        ActivationKind::Tanh => 0,
        ActivationKind::Sigmoid => 1,
        ActivationKind::ReLU => 2,
    });
    buf.push(match spec.loss {
        LossKind::SquaredError => 0,
        LossKind::SoftmaxCrossEntropy => 1,
    });
    buf.push(u8::from(spec.bias));
    buf.push(match spec.supervision {
        Supervision::FinalStep => 0,
        Supervision::AllSteps => 1,
    });
    buf.extend_from_slice(&(spec.seq_len as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.widths.len() as u32).to_le_bytes());
    for w in &spec.widths {
        buf.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    fn write_matrices<'a>(
        buf: &mut Vec<u8>,
        matrices: impl ExactSizeIterator<Item = &'a Matrix>,
    ) {
        buf.extend_from_slice(&(matrices.len() as u32).to_le_bytes());
        for m in matrices {
            buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    write_matrices(&mut buf, (0..weights.num_w()).map(|l| weights.w(l)));
    write_matrices(&mut buf, (0..weights.num_u()).map(|l| weights.u(l)));
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(NetworkSpec, WeightStore), LpError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let fail = |msg: &str| LpError::Dataset(format!("{}: {msg}", path.display()));

    let take = |at: &mut usize, n: usize| -> Result<&[u8], LpError> {
        if *at + n > bytes.len() {
            return Err(fail("truncated weights file"));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    if take(&mut at, 8)? != MAGIC {
        return Err(fail("not a weights file (bad magic)"));
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let tag = take(&mut at, 5)?.to_vec();
    let arch = match tag[0] {
        0 => ArchKind::Mlp,
        1 => ArchKind::Rnn,
        2 => ArchKind::ResNetDirect,
        3 => ArchKind::ResNetTilde,
        other => return Err(fail(&format!("bad arch tag {other}"))),
    };
    let activation = match tag[1] {
        0 => ActivationKind::Tanh,
        1 => ActivationKind::Sigmoid,
        2 => ActivationKind::ReLU,
        other => return Err(fail(&format!("bad activation tag {other}"))),
    };
    let loss = match tag[2] {
        0 => LossKind::SquaredError,
        1 => LossKind::SoftmaxCrossEntropy,
        other => return Err(fail(&format!("bad loss tag {other}"))),
    };
    let bias = match tag[3] {
        0 => false,
        1 => true,
        other => return Err(fail(&format!("bad bias tag {other}"))),
    };
    let supervision = match tag[4] {
        0 => Supervision::FinalStep,
        1 => Supervision::AllSteps,
        other => return Err(fail(&format!("bad supervision tag {other}"))),
    };
    let seq_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let nwidths = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut widths = Vec::with_capacity(nwidths);
    for _ in 0..nwidths {
        widths.push(u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize);
    }
    let mut spec = NetworkSpec::new(arch, widths, activation, loss);
    spec.seq_len = seq_len;
    spec.bias = bias;
    spec.supervision = supervision;
    spec.validate()?;

    let read_matrices = |at: &mut usize| -> Result<Vec<Matrix>, LpError> {
        let n = u32::from_le_bytes(take(at, 4)?.try_into().unwrap()) as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let rows = u32::from_le_bytes(take(at, 4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(at, 4)?.try_into().unwrap()) as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let v = f64::from_le_bytes(take(at, 8)?.try_into().unwrap());
                if !v.is_finite() {
                    return Err(fail("non-finite weight value"));
                }
                data.push(v);
            }
            out.push(Matrix::new(rows, cols, data)?);
        }
        Ok(out)
    };
    let w = read_matrices(&mut at)?;
    let u = read_matrices(&mut at)?;
    if at != bytes.len() {
        return Err(fail("trailing bytes after weight data"));
    }
    if w.len() != spec.num_weights() || u.len() != spec.num_recurrent_weights() {
        return Err(fail("matrix count does not match the spec echo"));
    }
    for (l, m) in w.iter().enumerate() {
        if (m.rows(), m.cols()) != spec.weight_shape(l) {
            return Err(fail(&format!("W[{l}] shape does not match the spec echo")));
        }
    }
    for (l, m) in u.iter().enumerate() {
        if (m.rows(), m.cols()) != spec.recurrent_shape(l) {
            return Err(fail(&format!("U[{l}] shape does not match the spec echo")));
        }
    }
    Ok((spec, WeightStore::from_parts(w, u)))
}
