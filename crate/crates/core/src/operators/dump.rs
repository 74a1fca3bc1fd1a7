//! Binary operator files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `NBEMOP01`                          |
//! | 1     | kind (0 = V, 1 = K, 2 = K', 3 = W)        |
//! | 1     | test family (0 = P1, 1 = DP0, 2 = DP1)    |
//! | 1     | trial family                              |
//! | 5     | zero padding                              |
//! | 8     | rows (u64)                                |
//! | 8     | columns (u64)                             |
//! | 8·r·c | entries, row-major f64                    |

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{OperatorKind, OperatorMatrix};
use crate::error::{BemError, Result};
use crate::spaces::SpaceFamily;

const MAGIC: &[u8; 8] = b"NBEMOP01";

/// Matrix and metadata read from an operator file, not yet bound to spaces.
#[derive(Debug, Clone)]
pub struct RawOperator {
    pub kind: OperatorKind,
    pub test_family: SpaceFamily,
    pub trial_family: SpaceFamily,
    pub matrix: DMatrix<f64>,
}

fn family_code(f: SpaceFamily) -> u8 {
    match f {
        SpaceFamily::P1Continuous => 0,
        SpaceFamily::P0Discontinuous => 1,
        SpaceFamily::P1Discontinuous => 2,
    }
}

fn family_from_code(c: u8) -> Option<SpaceFamily> {
    match c {
        0 => Some(SpaceFamily::P1Continuous),
        1 => Some(SpaceFamily::P0Discontinuous),
        2 => Some(SpaceFamily::P1Discontinuous),
        _ => None,
    }
}

fn corrupt(message: impl Into<String>) -> BemError {
    BemError::Parse {
        line: 0,
        message: message.into(),
    }
}

pub fn save_operator<W: Write>(op: &OperatorMatrix, mut out: W) -> Result<()> {
    let m = op.matrix();
    let mut header = [0u8; 16];
    header[..8].copy_from_slice(MAGIC);
    header[8] = op.kind().code();
    header[9] = family_code(op.test().family());
    header[10] = family_code(op.trial().family());
    out.write_all(&header)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut row = Vec::with_capacity(8 * m.ncols());
    for i in 0..m.nrows() {
        row.clear();
        for j in 0..m.ncols() {
            row.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
        out.write_all(&row)?;
    }
    Ok(())
}

pub fn load_operator<R: Read>(mut input: R) -> Result<RawOperator> {
    let mut header = [0u8; 32];
    input.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(corrupt("not an operator file (bad magic)"));
    }
    let kind = OperatorKind::from_code(header[8])
        .ok_or_else(|| corrupt(format!("unknown operator kind {}", header[8])))?;
    let test_family = family_from_code(header[9])
        .ok_or_else(|| corrupt(format!("unknown test family {}", header[9])))?;
    let trial_family = family_from_code(header[10])
        .ok_or_else(|| corrupt(format!("unknown trial family {}", header[10])))?;
    let read_u64 = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("eight bytes"));
    let rows = read_u64(&header[16..24]) as usize;
    let cols = read_u64(&header[24..32]) as usize;
    if rows.checked_mul(cols).is_none_or(|n| n > 1 << 31) {
        return Err(corrupt(format!("implausible dimensions {rows}x{cols}")));
    }
    let mut bytes = vec![0u8; 8 * rows * cols];
    input.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")));
    let matrix = DMatrix::from_row_iterator(rows, cols, values);
    Ok(RawOperator {
        kind,
        test_family,
        trial_family,
        matrix,
    })
}
