use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Participant × response utilities (logits) plus one agreement bias per
/// participant.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityState<T: Real> {
    pub m: DMatrix<T>,
    pub b: DVector<T>,
}

impl<T: Real> UtilityState<T> {
    pub fn new(m: DMatrix<T>, b: DVector<T>) -> Result<Self> {
        if b.len() != m.nrows() {
            return Err(Error::LengthMismatch {
                left: m.nrows(),
                right: b.len(),
            });
        }
        Ok(UtilityState { m, b })
    }

    pub fn zeros(n_participants: usize, n_responses: usize) -> Self {
        UtilityState {
            m: DMatrix::zeros(n_participants, n_responses),
            b: DVector::zeros(n_participants),
        }
    }

    pub fn n_participants(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_responses(&self) -> usize {
        self.m.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(self.b.iter()).all(|x| x.is_finite())
    }

    /// Agreement logit `m_ij + b_i`.
    #[inline]
    pub fn agreement_logit(&self, participant: usize, response: usize) -> T {
        self.m[(participant, response)] + self.b[participant]
    }

    /// Euclidean distance over the stacked `(M, b)` vector.
    pub fn distance(&self, other: &Self) -> T {
        let dm = (&self.m - &other.m).norm_squared();
        let db = (&self.b - &other.b).norm_squared();
        (dm + db).sqrt()
    }

    /// Number of free parameters, `n·m + n`.
    pub fn dim(&self) -> usize {
        self.m.len() + self.b.len()
    }

    /// Element-wise mean of a non-empty collection of states.
    pub fn mean_of<'a, I>(states: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a UtilityState<T>>,
    {
        let mut iter = states.into_iter();
        let first = iter.next()?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for s in iter {
            acc.m += &s.m;
            acc.b += &s.b;
            count += 1;
        }
        let inv = T::one() / T::from_count(count);
        acc.m *= inv;
        acc.b *= inv;
        Some(acc)
    }

    pub fn cast<U: Real>(&self) -> UtilityState<U> {
        UtilityState {
            m: self.m.map(|x| U::lit(x.to_f64_lossy())),
            b: self.b.map(|x| U::lit(x.to_f64_lossy())),
        }
    }
}

/// Writes a matrix as CSV, one row per participant, no header.
pub fn write_matrix_csv<T: Real, W: Write>(m: &DMatrix<T>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|x| format!("{x}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<T: Real, R: Read>(reader: R) -> Result<DMatrix<T>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (lineno, record) in r.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl<T: Real> UtilityState<T> {
    pub fn write_m_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(&self.m, writer)
    }

    /// Bias vector as a single-column CSV.
    pub fn write_b_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(&DMatrix::from_column_slice(self.b.len(), 1, self.b.as_slice()), writer)
    }

    pub fn read_csv<R1: Read, R2: Read>(m: R1, b: R2) -> Result<Self> {
        let m = read_matrix_csv::<T, _>(m)?;
        let b = read_matrix_csv::<T, _>(b)?;
        if b.ncols() > 1 {
            return Err(Error::Parse {
                line: 1,
                message: "bias CSV must have a single column".into(),
            });
        }
        UtilityState::new(m, DVector::from_column_slice(b.as_slice()))
    }
}
