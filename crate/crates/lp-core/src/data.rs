//! Dataset ingestion (CSV) and synthetic generators for desk-scale runs.

use crate::error::{LpError, Result};
use crate::linalg::Vector;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use std::path::Path;

/// One example's input: a single vector, or a sequence of per-step vectors
/// for recurrent graphs.
#[derive(Clone, Debug, PartialEq)]
pub enum ExampleInput {
    Single(Vector),
    Sequence(Vec<Vector>),
}

impl ExampleInput {
    pub fn width(&self) -> usize {
        match self {
            ExampleInput::Single(v) => v.len(),
            ExampleInput::Sequence(steps) => steps.first().map_or(0, Vector::len),
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            ExampleInput::Single(_) => 1,
            ExampleInput::Sequence(steps) => steps.len(),
        }
    }

    /// Input vector at 1-based time step `t` (static inputs only have t = 1).
    pub fn at_step(&self, t: usize) -> &Vector {
        match self {
            ExampleInput::Single(v) => v,
            ExampleInput::Sequence(steps) => &steps[t - 1],
        }
    }
}

/// Supervised dataset with uniform input/target widths.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Vec<ExampleInput>,
    pub targets: Vec<Vector>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Vec<ExampleInput>, targets: Vec<Vector>) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            inputs,
            targets,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(LpError::Dataset(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let w = self.input_width();
        let tw = self.target_width();
        let t = self.seq_len();
        for (i, input) in self.inputs.iter().enumerate() {
            if input.width() != w || input.seq_len() != t {
                return Err(LpError::Dataset(format!(
                    "example {i}: non-uniform input shape"
                )));
            }
            if let ExampleInput::Sequence(steps) = input {
                if steps.iter().any(|s| s.len() != w) {
                    return Err(LpError::Dataset(format!(
                        "example {i}: non-uniform step width"
                    )));
                }
            }
        }
        if self.targets.iter().any(|y| y.len() != tw) {
            return Err(LpError::Dataset("non-uniform target width".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.inputs.first().map_or(0, ExampleInput::width)
    }

    pub fn target_width(&self) -> usize {
        self.targets.first().map_or(0, Vector::len)
    }

    pub fn seq_len(&self) -> usize {
        self.inputs.first().map_or(1, ExampleInput::seq_len)
    }

    /// Copy with inputs standardized per dimension: (x - mean) / std, computed
    /// over all examples (and all time steps). Dimensions with zero spread are
    /// only centered.
    pub fn standardized(&self) -> Dataset {
        let w = self.input_width();
        let mut mean = vec![0.0; w];
        let mut count = 0usize;
        let each = |v: &Vector, acc: &mut Vec<f64>| {
            for k in 0..w {
                acc[k] += v[k];
            }
        };
        for input in &self.inputs {
            match input {
                ExampleInput::Single(v) => {
                    each(v, &mut mean);
                    count += 1;
                }
                ExampleInput::Sequence(steps) => {
                    for v in steps {
                        each(v, &mut mean);
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return self.clone();
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0; w];
        let mut accumulate_var = |v: &Vector| {
            for k in 0..w {
                let d = v[k] - mean[k];
                var[k] += d * d;
            }
        };
        for input in &self.inputs {
            match input {
                ExampleInput::Single(v) => accumulate_var(v),
                ExampleInput::Sequence(steps) => steps.iter().for_each(&mut accumulate_var),
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|&s| {
                let sd = (s / count as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let transform = |v: &Vector| -> Vector {
            Vector::new((0..w).map(|k| (v[k] - mean[k]) / std[k]).collect())
        };
        let inputs = self
            .inputs
            .iter()
            .map(|input| match input {
                ExampleInput::Single(v) => ExampleInput::Single(transform(v)),
                ExampleInput::Sequence(steps) => {
                    ExampleInput::Sequence(steps.iter().map(transform).collect())
                }
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            inputs,
            targets: self.targets.clone(),
        }
    }
}

/// The four canonical XOR points with targets 0, 1, 1, 0.
pub fn gen_xor() -> Dataset {
    let points = [
        ([0.0, 0.0], 0.0),
        ([0.0, 1.0], 1.0),
        ([1.0, 0.0], 1.0),
        ([1.0, 1.0], 0.0),
    ];
    let inputs = points
        .iter()
        .map(|(p, _)| ExampleInput::Single(Vector::new(p.to_vec())))
        .collect();
    let targets = points.iter().map(|(_, y)| Vector::new(vec![*y])).collect();
    Dataset::new("xor", inputs, targets).expect("xor dataset is well formed")
}

/// Two interleaving half-circles with additive Gaussian noise of the given
/// standard deviation. Class 0 lies on the unit arc centered at the origin,
/// class 1 on the arc centered at (1, 0.5) mirrored downwards.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(LpError::Dataset("two_moons requires n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = n - n / 2;
    let n1 = n / 2;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let arc = |k: usize, count: usize| -> f64 {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * (k as f64) / ((count - 1) as f64)
        }
    };
    let normal = if noise > 0.0 {
        Some(Normal::new(0.0, noise).map_err(|e| LpError::Dataset(e.to_string()))?)
    } else {
        None
    };
    let perturb = |x: f64, rng: &mut ChaCha8Rng| match &normal {
        Some(d) => x + d.sample(rng),
        None => x,
    };
    for k in 0..n0 {
        let t = arc(k, n0);
        let (x, y) = (t.cos(), t.sin());
        inputs.push(ExampleInput::Single(Vector::new(vec![
            perturb(x, &mut rng),
            perturb(y, &mut rng),
        ])));
        targets.push(Vector::new(vec![0.0]));
    }
    for k in 0..n1 {
        let t = arc(k, n1);
        let (x, y) = (1.0 - t.cos(), 0.5 - t.sin());
        inputs.push(ExampleInput::Single(Vector::new(vec![
            perturb(x, &mut rng),
            perturb(y, &mut rng),
        ])));
        targets.push(Vector::new(vec![1.0]));
    }
    Dataset::new("two_moons", inputs, targets)
}

/// Random binary sequences of length `t`; the target at the final step is the
/// XOR of all bits.
pub fn gen_parity_sequences(n: usize, t: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || t == 0 {
        return Err(LpError::Dataset("parity requires n >= 1 and t >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bit = Uniform::new_inclusive(0u8, 1u8);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut parity = 0u8;
        let mut steps = Vec::with_capacity(t);
        for _ in 0..t {
            let b = bit.sample(&mut rng);
            parity ^= b;
            steps.push(Vector::new(vec![b as f64]));
        }
        inputs.push(ExampleInput::Sequence(steps));
        targets.push(Vector::new(vec![parity as f64]));
    }
    Dataset::new("parity", inputs, targets)
}

/// Load a dataset from a comma-separated file. The header row is optional and
/// detected by a non-numeric cell in a referenced column. With `one_hot`,
/// the single target column must hold integer class labels in `[0, classes)`
/// and is expanded to an indicator vector.
pub fn load_csv(
    path: impl AsRef<Path>,
    input_cols: &[usize],
    target_cols: &[usize],
    one_hot: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    if input_cols.is_empty() {
        return Err(LpError::Dataset("input_cols must not be empty".into()));
    }
    if target_cols.is_empty() {
        return Err(LpError::Dataset("target_cols must not be empty".into()));
    }
    if one_hot.is_some() && target_cols.len() != 1 {
        return Err(LpError::Dataset(
            "one_hot requires exactly one target column".into(),
        ));
    }
    let needed = input_cols.iter().chain(target_cols).copied().max().unwrap();

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut expected_cols: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() <= needed {
            return Err(LpError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg: format!(
                    "row has {} columns but column {} is referenced",
                    cells.len(),
                    needed
                ),
            });
        }
        match expected_cols {
            None => expected_cols = Some(cells.len()),
            Some(n) if n != cells.len() => {
                return Err(LpError::Parse {
                    path: path_str.clone(),
                    line: line_no,
                    msg: format!("ragged row: expected {n} columns, found {}", cells.len()),
                })
            }
            _ => {}
        }
        let parse = |col: usize| -> std::result::Result<f64, String> {
            cells[col]
                .parse::<f64>()
                .map_err(|_| format!("non-numeric cell '{}' in column {col}", cells[col]))
        };
        // Optional header: skip the first row iff a referenced cell is non-numeric.
        if inputs.is_empty() && idx == 0 {
            let header = input_cols
                .iter()
                .chain(target_cols)
                .any(|&c| parse(c).is_err());
            if header {
                continue;
            }
        }
        let mut xs = Vec::with_capacity(input_cols.len());
        for &c in input_cols {
            xs.push(parse(c).map_err(|msg| LpError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg,
            })?);
        }
        let y = if let Some(classes) = one_hot {
            let raw = parse(target_cols[0]).map_err(|msg| LpError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg,
            })?;
            let label = raw as usize;
            if raw.fract() != 0.0 || raw < 0.0 || label >= classes {
                return Err(LpError::Parse {
                    path: path_str.clone(),
                    line: line_no,
                    msg: format!("label {raw} outside 0..{classes}"),
                });
            }
            let mut enc = vec![0.0; classes];
            enc[label] = 1.0;
            enc
        } else {
            let mut ys = Vec::with_capacity(target_cols.len());
            for &c in target_cols {
                ys.push(parse(c).map_err(|msg| LpError::Parse {
                    path: path_str.clone(),
                    line: line_no,
                    msg,
                })?);
            }
            ys
        };
        inputs.push(ExampleInput::Single(Vector::new(xs)));
        targets.push(Vector::new(y));
    }
    Dataset::new(path_str, inputs, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn xor_is_canonical() {
        let ds = gen_xor();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.input_width(), 2);
        assert_eq!(ds.target_width(), 1);
        let ys: Vec<f64> = ds.targets.iter().map(|y| y[0]).collect();
        assert_eq!(ys, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn two_moons_zero_noise_lies_on_arcs() {
        let ds = gen_two_moons(40, 0.0, 3).unwrap();
        for (input, y) in ds.inputs.iter().zip(&ds.targets) {
            let p = match input {
                ExampleInput::Single(v) => v,
                _ => unreachable!(),
            };
            if y[0] == 0.0 {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert!((r - 1.0).abs() < 1e-12, "class 0 radius {r}");
            } else {
                let (dx, dy) = (p[0] - 1.0, p[1] - 0.5);
                let r = (dx * dx + dy * dy).sqrt();
                assert!((r - 1.0).abs() < 1e-12, "class 1 radius {r}");
            }
        }
    }

    #[test]
    fn generators_reject_empty_requests() {
        assert!(gen_two_moons(0, 0.0, 1).is_err());
        assert!(gen_parity_sequences(0, 4, 1).is_err());
        assert!(gen_parity_sequences(4, 0, 1).is_err());
    }

    #[test]
    fn parity_targets_match_bits_and_reproduce() {
        let a = gen_parity_sequences(16, 4, 11).unwrap();
        let b = gen_parity_sequences(16, 4, 11).unwrap();
        assert_eq!(a, b);
        for (input, y) in a.inputs.iter().zip(&a.targets) {
            let steps = match input {
                ExampleInput::Sequence(s) => s,
                _ => unreachable!(),
            };
            let parity = steps.iter().fold(0u8, |p, s| p ^ (s[0] as u8));
            assert_eq!(parity as f64, y[0]);
        }
    }

    #[test]
    fn csv_roundtrip_with_header_and_one_hot() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b,label").unwrap();
        writeln!(f, "0.5, 1.5, 1").unwrap();
        writeln!(f, "-1.0, 2.0, 0").unwrap();
        let ds = load_csv(f.path(), &[0, 1], &[2], Some(3)).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.target_width(), 3);
        assert_eq!(ds.targets[0].as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(ds.targets[1].as_slice(), &[1.0, 0.0, 0.0]);
        // Same file loads to the same dataset.
        let again = load_csv(f.path(), &[0, 1], &[2], Some(3)).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,2,0").unwrap();
        writeln!(f, "3,4").unwrap();
        let err = load_csv(f.path(), &[0, 1], &[2], None).unwrap_err();
        assert!(err.to_string().contains(":2:"), "got: {err}");

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "1,2,0").unwrap();
        writeln!(g, "3,oops,1").unwrap();
        let err = load_csv(g.path(), &[0, 1], &[2], None).unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "got: {err}");
        assert!(err.to_string().contains(":2:"), "got: {err}");
    }

    #[test]
    fn xor_file_shape() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for row in ["0,0,0", "0,1,1", "1,0,1", "1,1,0"] {
            writeln!(f, "{row}").unwrap();
        }
        let ds = load_csv(f.path(), &[0, 1], &[2], None).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.input_width(), 2);
        assert_eq!(ds.target_width(), 1);
    }

    #[test]
    fn standardize_centers_inputs() {
        let ds = gen_two_moons(30, 0.05, 5).unwrap().standardized();
        let mut mean = [0.0; 2];
        for input in &ds.inputs {
            if let ExampleInput::Single(v) = input {
                mean[0] += v[0];
                mean[1] += v[1];
            }
        }
        for m in mean {
            assert!((m / 30.0).abs() < 1e-12);
        }
    }
}
