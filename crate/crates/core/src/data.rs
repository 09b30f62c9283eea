//! Datasets with their synthetic generators and CSV ingestion.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_thin, Matrix};

/// Disjoint index sets into a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn all_train(n: usize) -> Self {
        Self {
            train: (0..n).collect(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Domain(format!(
                    "split index {i} out of range for {n} points"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!("split index {i} appears twice")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    split: Split,
    provenance: String,
}

impl Dataset {
    /// Builds a dataset whose split puts every point in `train`.
    pub fn new(
        points: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Domain("dataset is empty".into()))?;
        if dim == 0 {
            return Err(Error::Dimension("points have dimension 0".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension(format!(
                    "point {i} has length {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("point {i}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} points",
                    l.len(),
                    points.len()
                )));
            }
        }
        let split = Split::all_train(points.len());
        Ok(Self {
            points,
            labels,
            split,
            provenance: provenance.into(),
        })
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.len())?;
        self.split = split;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Copies the given points (and labels) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut pts = Vec::with_capacity(indices.len());
        for &i in indices {
            pts.push(
                self.points
                    .get(i)
                    .ok_or_else(|| Error::Domain(format!("index {i} out of range")))?
                    .clone(),
            );
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset::new(
            pts,
            labels,
            format!("{} (subset of {})", self.provenance, indices.len()),
        )
    }

    /// Points in the training part of the split.
    pub fn train(&self) -> Result<Dataset> {
        self.subset(&self.split.train)
    }

    pub fn test(&self) -> Result<Dataset> {
        self.subset(&self.split.test)
    }

    pub fn val(&self) -> Result<Dataset> {
        self.subset(&self.split.val)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StiefelSpec {
    pub n1: usize,
    pub n2: usize,
    pub count: usize,
    pub delta: f64,
    pub seed: u64,
}

impl StiefelSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n2 == 0 || self.n2 >= self.n1 {
            errs.push(format!(
                "need 0 < n2 < n1, got n1={} n2={}",
                self.n1, self.n2
            ));
        }
        if self.count == 0 {
            errs.push("sample count must be positive".into());
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            errs.push(format!(
                "delta must be finite and non-negative, got {}",
                self.delta
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn manifold_dim(&self) -> usize {
        self.n1 * self.n2 - self.n2 * (self.n2 + 1) / 2
    }
}

/// Column-major flattening of a matrix.
pub fn vectorize(m: &Matrix) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut v = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols || v.is_empty() {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot be {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
}

/// One uniformly distributed point of St(n1, n2).
pub fn random_stiefel(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> Result<Matrix> {
    let g = Matrix::from_fn(n1, n2, |_, _| StandardNormal.sample(rng));
    let qr = qr_thin(&g)?;
    let mut q = qr.q;
    for j in 0..n2 {
        if qr.r[(j, j)] < 0.0 {
            for i in 0..n1 {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Clean and noisy samples of St(n1, n2), vectorized column-major.
///
/// Clean points and noise come from separate streams of the seeded
/// generator, so the clean set does not depend on `delta`.
pub fn sample_stiefel(spec: &StiefelSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clean = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        clean.push(vectorize(&random_stiefel(&mut rng, spec.n1, spec.n2)?));
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    let normal = Normal::new(0.0, spec.delta).map_err(|e| Error::Domain(e.to_string()))?;
    let noisy = clean
        .iter()
        .map(|p| {
            p.iter()
                .map(|v| v + normal.sample(&mut noise_rng))
                .collect()
        })
        .collect();
    let tag = format!(
        "St({},{}) N={} delta={} seed={}",
        spec.n1, spec.n2, spec.count, spec.delta, spec.seed
    );
    Ok((
        Dataset::new(clean, None, format!("{tag} clean"))?,
        Dataset::new(noisy, None, format!("{tag} noisy"))?,
    ))
}

/// Noisy samples of the orthogonal group `St(n, n)`, labelled by its two
/// connected components: 0 for `det = +1`, 1 for `det = -1`.
pub fn orthogonal_components(n: usize, count: usize, delta: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || count == 0 || !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "need n >= 2, count > 0 and delta >= 0, got {n}, {count}, {delta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let normal = Normal::new(0.0, delta).map_err(|e| Error::Domain(e.to_string()))?;
    let mut points = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let q = random_stiefel(&mut rng, n, n)?;
        labels.push(usize::from(determinant(&q) < 0.0));
        points.push(
            vectorize(&q)
                .into_iter()
                .map(|v| v + normal.sample(&mut noise_rng))
                .collect(),
        );
    }
    Dataset::new(
        points,
        Some(labels),
        format!("O({n}) components N={count} delta={delta} seed={seed}"),
    )
}

/// Determinant by Gaussian elimination with partial pivoting.
fn determinant(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs()))
            .unwrap();
        if a[(p, c)] == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..n {
                let t = a[(c, j)];
                a[(c, j)] = a[(p, j)];
                a[(p, j)] = t;
            }
            det = -det;
        }
        det *= a[(c, c)];
        for i in c + 1..n {
            let f = a[(i, c)] / a[(c, c)];
            for j in c..n {
                a[(i, j)] -= f * a[(c, j)];
            }
        }
    }
    det
}

/// Half-plane toy set: `(x, y·[x > 0])` with `x, y` uniform on [-1, 1].
pub fn toy_halfplane(count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new_inclusive(-1.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let points = (0..count)
        .map(|_| {
            let x: f64 = u.sample(&mut rng);
            let y: f64 = u.sample(&mut rng);
            vec![x, if x > 0.0 { y } else { 0.0 }]
        })
        .collect();
    Dataset::new(
        points,
        None,
        format!("toy half-plane N={count} seed={seed}"),
    )
}

/// Which columns of a CSV file hold features and labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Feature column indices; `None` takes every non-label column.
    pub features: Option<Vec<usize>>,
    pub label: Option<usize>,
    pub has_header: bool,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_csv(file, schema, &path.display().to_string())
}

/// Parses CSV text; `#` starts a comment line.
pub fn read_csv(reader: impl Read, schema: &CsvSchema, source_name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        source_name: source_name.into(),
        line,
        message,
    };
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {w} columns, found {}", rec.len()),
                ))
            }
            _ => {}
        }
        let cols: Vec<usize> = match &schema.features {
            Some(f) => f.clone(),
            None => (0..rec.len())
                .filter(|&c| Some(c) != schema.label)
                .collect(),
        };
        let mut p = Vec::with_capacity(cols.len());
        for c in cols {
            let cell = rec
                .get(c)
                .ok_or_else(|| parse_err(line, format!("missing column {c}")))?;
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric cell {cell:?} in column {c}")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("non-finite cell {cell:?} in column {c}"),
                ));
            }
            p.push(v);
        }
        points.push(p);
        if let Some(c) = schema.label {
            let cell = rec
                .get(c)
                .ok_or_else(|| parse_err(line, format!("missing label column {c}")))?;
            labels.push(
                parse_label(cell)
                    .ok_or_else(|| parse_err(line, format!("invalid label {cell:?}")))?,
            );
        }
    }
    if points.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    let labels = schema.label.map(|_| labels);
    Dataset::new(points, labels, format!("csv {source_name}"))
}

fn parse_label(cell: &str) -> Option<usize> {
    cell.parse::<usize>().ok().or_else(|| {
        let v: f64 = cell.parse().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64).then_some(v as usize)
    })
}

/// Writes a header row `x0,…,x{n-1}[,label]` followed by one row per point.
pub fn write_csv(dataset: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..dataset.dim()).map(|i| format!("x{i}")).collect();
    if dataset.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, p) in dataset.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(l) = &dataset.labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, File::create(path)?)
}

/// Schema matching the layout produced by [`write_csv`].
pub fn written_schema(dataset: &Dataset) -> CsvSchema {
    CsvSchema {
        features: Some((0..dataset.dim()).collect()),
        label: dataset.labels.is_some().then_some(dataset.dim()),
        has_header: true,
    }
}

/// Metadata written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub provenance: String,
    pub count: usize,
    pub dim: usize,
    pub labelled: bool,
    pub generator: serde_json::Value,
}

impl Sidecar {
    pub fn describe(dataset: &Dataset, generator: serde_json::Value) -> Self {
        Self {
            provenance: dataset.provenance.clone(),
            count: dataset.len(),
            dim: dataset.dim(),
            labelled: dataset.labels.is_some(),
            generator,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// Seeded random train/val/test split. Sizes are `round(f·N)`, with the test
/// part clamped so the three never exceed `N`.
pub fn make_split(dataset: Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Domain(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    if fractions.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!(
            "split fractions sum above 1: {fractions:?}"
        )));
    }
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let size = |f: f64| ((f * n as f64).round() as usize).min(n);
    let n_train = size(fractions[0]);
    let n_val = size(fractions[1]).min(n - n_train);
    let n_test = size(fractions[2]).min(n - n_train - n_val);
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..n_train + n_val + n_test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    dataset.with_split(Split { train, val, test })
}
