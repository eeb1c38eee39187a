use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{shape_err, MeamError, Result};

/// First token of the metadata line.
pub const DATASET_MAGIC: &str = "# meam-dataset v1";

/// Offline transitions `(s, a, r, s', done)` with fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d_s: usize,
    pub d_a: usize,
    pub seed: u64,
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 on terminal rows, 0.0 otherwise.
    pub dones: Array1<f64>,
}

/// Rounds to the 9 significant digits used on disk.
pub(crate) fn quantize(v: f64) -> f64 {
    format_float(v).parse().expect("formatted float parses")
}

fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

impl Dataset {
    pub fn empty(d_s: usize, d_a: usize, seed: u64) -> Self {
        Self {
            d_s,
            d_a,
            seed,
            states: Array2::zeros((0, d_s)),
            actions: Array2::zeros((0, d_a)),
            rewards: Array1::zeros(0),
            next_states: Array2::zeros((0, d_s)),
            dones: Array1::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_columns(&self) -> usize {
        2 * self.d_s + self.d_a + 2
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, sp: &[f64], done: bool) -> Result<()> {
        if s.len() != self.d_s || sp.len() != self.d_s {
            return Err(shape_err("transition state", self.d_s, s.len().max(sp.len())));
        }
        if a.len() != self.d_a {
            return Err(shape_err("transition action", self.d_a, a.len()));
        }
        let push_row = |m: &mut Array2<f64>, row: &[f64]| {
            m.push_row(ArrayView1::from(row)).expect("row width checked above");
        };
        push_row(&mut self.states, s);
        push_row(&mut self.actions, a);
        push_row(&mut self.next_states, sp);
        self.rewards.append(Axis(0), ArrayView1::from(&[r])).expect("1-d append");
        self.dones
            .append(Axis(0), ArrayView1::from(&[if done { 1.0 } else { 0.0 }]))
            .expect("1-d append");
        Ok(())
    }

    /// Rows selected by `idx`, in order.
    pub fn gather(&self, idx: &[usize]) -> Dataset {
        Dataset {
            d_s: self.d_s,
            d_a: self.d_a,
            seed: self.seed,
            states: self.states.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
            rewards: self.rewards.select(Axis(0), idx),
            next_states: self.next_states.select(Axis(0), idx),
            dones: self.dones.select(Axis(0), idx),
        }
    }

    /// Concatenation of two datasets with equal dimensions.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.d_s != other.d_s || self.d_a != other.d_a {
            return Err(shape_err(
                "dataset dims",
                format!("({}, {})", self.d_s, self.d_a),
                format!("({}, {})", other.d_s, other.d_a),
            ));
        }
        let cat2 = |a: &Array2<f64>, b: &Array2<f64>| ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("same width");
        let cat1 = |a: &Array1<f64>, b: &Array1<f64>| ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("1-d");
        Ok(Dataset {
            d_s: self.d_s,
            d_a: self.d_a,
            seed: self.seed,
            states: cat2(&self.states, &other.states),
            actions: cat2(&self.actions, &other.actions),
            rewards: cat1(&self.rewards, &other.rewards),
            next_states: cat2(&self.next_states, &other.next_states),
            dones: cat1(&self.dones, &other.dones),
        })
    }

    /// Rounds every value to its on-disk representation.
    pub fn quantize(&mut self) {
        for m in [&mut self.states, &mut self.actions, &mut self.next_states] {
            m.mapv_inplace(quantize);
        }
        self.rewards.mapv_inplace(quantize);
    }

    pub fn header(&self) -> String {
        let mut cols: Vec<String> = (0..self.d_s).map(|i| format!("s{i}")).collect();
        cols.extend((0..self.d_a).map(|i| format!("a{i}")));
        cols.push("r".into());
        cols.extend((0..self.d_s).map(|i| format!("sp{i}")));
        cols.push("done".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{DATASET_MAGIC} d_s={} d_a={} rows={} seed={}\n{}\n",
            self.d_s,
            self.d_a,
            self.len(),
            self.seed,
            self.header()
        );
        for i in 0..self.len() {
            let mut fields: Vec<String> = Vec::with_capacity(self.num_columns());
            fields.extend(self.states.row(i).iter().map(|&v| format_float(v)));
            fields.extend(self.actions.row(i).iter().map(|&v| format_float(v)));
            fields.push(format_float(self.rewards[i]));
            fields.extend(self.next_states.row(i).iter().map(|&v| format_float(v)));
            fields.push(if self.dones[i] != 0.0 { "1" } else { "0" }.into());
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines
            .next()
            .ok_or_else(|| MeamError::Format("empty dataset file".into()))?;
        let rest = meta
            .strip_prefix(DATASET_MAGIC)
            .ok_or_else(|| MeamError::Format(format!("line 1: expected '{DATASET_MAGIC}' metadata, got '{meta}'")))?;
        let mut d_s = None;
        let mut d_a = None;
        let mut rows = None;
        let mut seed = None;
        for tok in rest.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| MeamError::Format(format!("line 1: malformed metadata token '{tok}'")))?;
            let bad = |_| MeamError::Format(format!("line 1: bad value for {k}: '{v}'"));
            match k {
                "d_s" => d_s = Some(v.parse::<usize>().map_err(bad)?),
                "d_a" => d_a = Some(v.parse::<usize>().map_err(bad)?),
                "rows" => rows = Some(v.parse::<usize>().map_err(bad)?),
                "seed" => seed = Some(v.parse::<u64>().map_err(bad)?),
                _ => return Err(MeamError::Format(format!("line 1: unknown metadata key '{k}'"))),
            }
        }
        let missing = |k: &str| MeamError::Format(format!("line 1: metadata lacks {k}"));
        let d_s = d_s.ok_or_else(|| missing("d_s"))?;
        let d_a = d_a.ok_or_else(|| missing("d_a"))?;
        let rows = rows.ok_or_else(|| missing("rows"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let mut ds = Dataset::empty(d_s, d_a, seed);
        let (_, header) = lines
            .next()
            .ok_or_else(|| MeamError::Format("line 2: missing column header".into()))?;
        if header != ds.header() {
            return Err(MeamError::Format(format!("line 2: expected header '{}', got '{header}'", ds.header())));
        }
        let ncol = ds.num_columns();
        let mut s = Vec::with_capacity(rows * d_s);
        let mut a = Vec::with_capacity(rows * d_a);
        let mut sp = Vec::with_capacity(rows * d_s);
        let mut r = Vec::with_capacity(rows);
        let mut done = Vec::with_capacity(rows);
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| MeamError::Format(format!("line {}: {e}", ln + 1)))?;
            if vals.len() != ncol {
                return Err(MeamError::Format(format!(
                    "line {}: expected {ncol} columns, got {}",
                    ln + 1,
                    vals.len()
                )));
            }
            s.extend_from_slice(&vals[..d_s]);
            a.extend_from_slice(&vals[d_s..d_s + d_a]);
            r.push(vals[d_s + d_a]);
            sp.extend_from_slice(&vals[d_s + d_a + 1..2 * d_s + d_a + 1]);
            let d = vals[ncol - 1];
            if d != 0.0 && d != 1.0 {
                return Err(MeamError::Format(format!("line {}: done must be 0 or 1, got {d}", ln + 1)));
            }
            done.push(d);
        }
        if r.len() != rows {
            return Err(MeamError::Format(format!("metadata says {rows} rows, file has {}", r.len())));
        }
        let n = r.len();
        ds.states = Array2::from_shape_vec((n, d_s), s).expect("sized");
        ds.actions = Array2::from_shape_vec((n, d_a), a).expect("sized");
        ds.next_states = Array2::from_shape_vec((n, d_s), sp).expect("sized");
        ds.rewards = Array1::from(r);
        ds.dones = Array1::from(done);
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        Dataset::from_csv(&fs::read_to_string(path)?)
    }
}
