//! Dataset-to-dataset operations used for preprocessing and feature
//! engineering, and ordered chains of them.
//!
//! Adaptive transforms (currently only [`Standardize`]) carry state learned
//! from data and refuse to run until fitted. All others are stateless.

use crate::data::{Column, DataError, Dataset, ValueKind};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TransformError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0} must be fitted before it is applied")]
    NotFitted(&'static str),
    #[error("column `{0}` is not a list column")]
    NotAListColumn(String),
    #[error("lists to explode differ in length at row {0}")]
    RaggedListLengths(usize),
    #[error("window of {window} steps is larger than the {rows} available rows")]
    WindowLargerThanData { window: usize, rows: usize },
    #[error("window size must be at least 1")]
    InvalidWindow,
    #[error("cannot fit on an empty dataset")]
    EmptyDataset,
}

/// Columns whose standard deviation falls below this are treated as constant.
pub const CONSTANT_STD_THRESHOLD: f64 = 1e-12;

/// Fitted per-column statistics of [`Standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub std: f64,
    pub constant: bool,
}

/// Rescales columns to zero mean and unit population standard deviation.
/// Constant columns map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardize {
    names: Vec<String>,
    stats: Option<Vec<ColumnStats>>,
}

impl Standardize {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Standardize {
            names: names.into_iter().map(Into::into).collect(),
            stats: None,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn stats(&self) -> Option<&[ColumnStats]> {
        self.stats.as_deref()
    }

    pub fn fit(&mut self, data: &Dataset) -> Result<(), TransformError> {
        if data.row_count() == 0 {
            return Err(TransformError::EmptyDataset);
        }
        let stats = self
            .names
            .iter()
            .map(|name| {
                let values = data.f64_column(name)?;
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = var.sqrt();
                Ok(ColumnStats {
                    name: name.clone(),
                    mean,
                    std,
                    constant: std < CONSTANT_STD_THRESHOLD,
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        self.stats = Some(stats);
        Ok(())
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset, TransformError> {
        let stats = self.stats.as_ref().ok_or(TransformError::NotFitted("standardize"))?;
        for s in stats {
            data.column(&s.name)?;
        }
        let columns = data
            .columns()
            .map(|(name, col)| {
                let Some(s) = stats.iter().find(|s| s.name == name) else {
                    return Ok((name.to_owned(), col.clone()));
                };
                let values = col.to_f64().ok_or_else(|| DataError::WrongKind {
                    name: name.to_owned(),
                    expected: ValueKind::Float64,
                    found: col.kind(),
                })?;
                let scaled = if s.constant {
                    vec![0.0; values.len()]
                } else {
                    values.iter().map(|v| (v - s.mean) / s.std).collect()
                };
                Ok((name.to_owned(), Column::Float64(scaled)))
            })
            .collect::<Result<Vec<_>, TransformError>>()?;
        Ok(Dataset::new_allow_nan(columns)?)
    }
}

/// A single transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// Keep exactly the named columns, in that order.
    Select(Vec<String>),
    /// Unnest list columns into one row per element.
    Explode(Vec<String>),
    /// Pivot each column into `window` lagged copies `c_0 .. c_{w-1}`.
    SlidingWindow(usize),
    Standardize(Standardize),
}

impl Transform {
    pub fn select<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Transform::Select(names.into_iter().map(Into::into).collect())
    }

    pub fn explode<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Transform::Explode(names.into_iter().map(Into::into).collect())
    }

    pub fn sliding_window(window: usize) -> Result<Self, TransformError> {
        if window == 0 {
            return Err(TransformError::InvalidWindow);
        }
        Ok(Transform::SlidingWindow(window))
    }

    /// An unfitted standardize over the named columns.
    pub fn standardize<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Transform::Standardize(Standardize::new(names))
    }

    /// Fits a standardize on `data` and returns it ready to apply.
    pub fn standardize_fit<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        data: &Dataset,
    ) -> Result<Self, TransformError> {
        let mut s = Standardize::new(names);
        s.fit(data)?;
        Ok(Transform::Standardize(s))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::Select(_) => "select",
            Transform::Explode(_) => "explode",
            Transform::SlidingWindow(_) => "sliding_window",
            Transform::Standardize(_) => "standardize",
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Transform::Standardize(_))
    }

    pub fn is_fitted(&self) -> bool {
        match self {
            Transform::Standardize(s) => s.stats.is_some(),
            _ => true,
        }
    }

    /// Learns state from `data`. A no-op for stateless transforms.
    pub fn fit(&mut self, data: &Dataset) -> Result<(), TransformError> {
        match self {
            Transform::Standardize(s) => s.fit(data),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset, TransformError> {
        match self {
            Transform::Select(names) => Ok(data.select(names)?),
            Transform::Explode(names) => explode(data, names),
            Transform::SlidingWindow(w) => sliding_window(data, *w),
            Transform::Standardize(s) => s.apply(data),
        }
    }
}

fn explode(data: &Dataset, names: &[String]) -> Result<Dataset, TransformError> {
    let mut lists = Vec::with_capacity(names.len());
    for name in names {
        match data.column(name)? {
            Column::Float64List(l) => lists.push(l),
            _ => return Err(TransformError::NotAListColumn(name.clone())),
        }
    }
    let Some(first) = lists.first() else {
        return Ok(data.clone());
    };

    let mut source_rows = Vec::new();
    for row in 0..data.row_count() {
        let len = first[row].len();
        if lists.iter().any(|l| l[row].len() != len) {
            return Err(TransformError::RaggedListLengths(row));
        }
        source_rows.extend(std::iter::repeat(row).take(len));
    }

    let columns = data
        .columns()
        .map(|(name, col)| match names.iter().position(|n| n == name) {
            Some(i) => (
                name.to_owned(),
                Column::Float64(lists[i].iter().flatten().copied().collect()),
            ),
            None => (name.to_owned(), col.take(&source_rows)),
        })
        .collect::<Vec<_>>();
    Ok(Dataset::new_allow_nan(columns)?)
}

fn sliding_window(data: &Dataset, window: usize) -> Result<Dataset, TransformError> {
    if window == 0 {
        return Err(TransformError::InvalidWindow);
    }
    let rows = data.row_count();
    if rows < window {
        return Err(TransformError::WindowLargerThanData { window, rows });
    }
    let out_rows = rows - window + 1;
    let mut columns = Vec::with_capacity(data.column_count() * window);
    for step in 0..window {
        for (name, col) in data.columns() {
            columns.push((format!("{name}_{step}"), col.slice(step, step + out_rows)));
        }
    }
    if columns.is_empty() {
        return Ok(Dataset::empty(out_rows));
    }
    Ok(Dataset::new_allow_nan(columns)?)
}

/// Transforms applied one after another, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransformChain {
    transforms: Vec<Transform>,
}

impl TransformChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, transform: Transform) {
        self.transforms.push(transform);
    }

    pub fn with(mut self, transform: Transform) -> Self {
        self.push(transform);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn is_fitted(&self) -> bool {
        self.transforms.iter().all(Transform::is_fitted)
    }

    /// Refits every adaptive member, each on the output of its predecessors.
    pub fn fit(&mut self, data: &Dataset) -> Result<(), TransformError> {
        let mut current = data.clone();
        for t in &mut self.transforms {
            t.fit(&current)?;
            current = t.apply(&current)?;
        }
        Ok(())
    }

    /// Fits members that are not fitted yet, then applies the chain.
    pub fn fit_apply(&mut self, data: &Dataset) -> Result<Dataset, TransformError> {
        let mut current = data.clone();
        for t in &mut self.transforms {
            if !t.is_fitted() {
                t.fit(&current)?;
            }
            current = t.apply(&current)?;
        }
        Ok(current)
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset, TransformError> {
        self.transforms
            .iter()
            .try_fold(data.clone(), |current, t| t.apply(&current))
    }
}

impl FromIterator<Transform> for TransformChain {
    fn from_iter<I: IntoIterator<Item = Transform>>(iter: I) -> Self {
        TransformChain {
            transforms: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig4() -> Dataset {
        Dataset::new(vec![
            ("V", Column::from(vec![1.0, 2.0, 3.0, 4.0, 5.0])),
            ("x", Column::from(vec![10.0, 20.0, 30.0, 40.0, 50.0])),
        ])
        .unwrap()
    }

    fn floats(d: &Dataset, name: &str) -> Vec<f64> {
        d.f64_column(name).unwrap()
    }

    #[test]
    fn window_of_three_on_fig4() {
        let out = Transform::sliding_window(3).unwrap().apply(&fig4()).unwrap();
        let names: Vec<&str> = out.names().iter().map(String::as_str).collect();
        assert_eq!(names, ["V_0", "x_0", "V_1", "x_1", "V_2", "x_2"]);
        let rows = out.to_row_major().unwrap();
        assert_eq!(
            rows,
            vec![
                vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0],
                vec![2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
                vec![3.0, 30.0, 4.0, 40.0, 5.0, 50.0],
            ]
        );
    }

    #[test]
    fn window_of_one_renames() {
        let out = Transform::sliding_window(1).unwrap().apply(&fig4()).unwrap();
        assert_eq!(out.names(), &["V_0".to_string(), "x_0".to_string()]);
        assert_eq!(floats(&out, "x_0"), floats(&fig4(), "x"));
    }

    #[test]
    fn window_errors() {
        assert_eq!(Transform::sliding_window(0).unwrap_err(), TransformError::InvalidWindow);
        let err = Transform::sliding_window(6).unwrap().apply(&fig4()).unwrap_err();
        assert_eq!(err, TransformError::WindowLargerThanData { window: 6, rows: 5 });
    }

    #[test]
    fn select_transform() {
        let out = Transform::select(["V"]).apply(&fig4()).unwrap();
        assert_eq!(out.names(), &["V".to_string()]);
        let empty = Transform::select(Vec::<String>::new()).apply(&fig4()).unwrap();
        assert_eq!((empty.column_count(), empty.row_count()), (0, 5));
        let err = Transform::select(["missing"]).apply(&fig4()).unwrap_err();
        assert_eq!(err, TransformError::Data(DataError::UnknownColumn("missing".into())));
    }

    #[test]
    fn explode_expands_rows() {
        let d = Dataset::new(vec![
            ("id", Column::from(vec![1_i64, 2])),
            ("trace", Column::from(vec![vec![10.0, 11.0], vec![20.0]])),
        ])
        .unwrap();
        let out = Transform::explode(["trace"]).apply(&d).unwrap();
        assert_eq!(out.column("id").unwrap(), &Column::Int64(vec![1, 1, 2]));
        assert_eq!(out.column("trace").unwrap(), &Column::Float64(vec![10.0, 11.0, 20.0]));
    }

    #[test]
    fn explode_singletons_unwrap() {
        let d = Dataset::new(vec![("t", Column::from(vec![vec![1.0], vec![2.0]]))]).unwrap();
        let out = Transform::explode(["t"]).apply(&d).unwrap();
        assert_eq!(out.column("t").unwrap(), &Column::Float64(vec![1.0, 2.0]));
    }

    #[test]
    fn explode_errors_and_empty_lists() {
        let d = Dataset::new(vec![
            ("a", Column::from(vec![vec![1.0, 2.0]])),
            ("b", Column::from(vec![vec![1.0]])),
        ])
        .unwrap();
        assert_eq!(
            Transform::explode(["a", "b"]).apply(&d).unwrap_err(),
            TransformError::RaggedListLengths(0)
        );
        let d = Dataset::new(vec![("a", Column::from(vec![1.0]))]).unwrap();
        assert_eq!(
            Transform::explode(["a"]).apply(&d).unwrap_err(),
            TransformError::NotAListColumn("a".into())
        );
        let d = Dataset::new(vec![
            ("k", Column::from(vec![1.0, 2.0, 3.0])),
            ("t", Column::from(vec![vec![1.0], vec![], vec![3.0, 4.0]])),
        ])
        .unwrap();
        let out = Transform::explode(["t"]).apply(&d).unwrap();
        assert_eq!(floats(&out, "k"), vec![1.0, 3.0, 3.0]);
    }

    #[test]
    fn standardize_small_column() {
        let d = Dataset::new(vec![("a", Column::from(vec![1.0, 2.0, 3.0]))]).unwrap();
        let t = Transform::standardize_fit(["a"], &d).unwrap();
        let Transform::Standardize(s) = &t else { unreachable!() };
        let stats = &s.stats().unwrap()[0];
        assert_eq!(stats.mean, 2.0);
        assert!((stats.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let out = floats(&t.apply(&d).unwrap(), "a");
        let mean = out.iter().sum::<f64>() / 3.0;
        let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_constant_and_unfitted() {
        let d = Dataset::new(vec![("a", Column::from(vec![5.0, 5.0]))]).unwrap();
        let t = Transform::standardize_fit(["a"], &d).unwrap();
        assert_eq!(floats(&t.apply(&d).unwrap(), "a"), vec![0.0, 0.0]);
        assert_eq!(
            Transform::standardize(["a"]).apply(&d).unwrap_err(),
            TransformError::NotFitted("standardize")
        );
        assert_eq!(
            Transform::standardize_fit(["a"], &Dataset::new(vec![("a", Column::from(Vec::<f64>::new()))]).unwrap())
                .unwrap_err(),
            TransformError::EmptyDataset
        );
        assert!(matches!(
            Transform::standardize_fit(["zz"], &d).unwrap_err(),
            TransformError::Data(DataError::UnknownColumn(_))
        ));
    }

    #[test]
    fn chains() {
        assert_eq!(TransformChain::new().apply(&fig4()).unwrap(), fig4());
        let chain = TransformChain::new()
            .with(Transform::sliding_window(3).unwrap())
            .with(Transform::select(["V_0", "x_0", "V_1", "x_1", "V_2"]));
        let out = chain.apply(&fig4()).unwrap();
        assert_eq!((out.row_count(), out.column_count()), (3, 5));
        let chain = TransformChain::new().with(Transform::standardize(["V"]));
        assert_eq!(chain.apply(&fig4()).unwrap_err(), TransformError::NotFitted("standardize"));
    }

    #[test]
    fn fit_apply_keeps_prefitted_members() {
        let other = Dataset::new(vec![("V", Column::from(vec![0.0, 10.0]))]).unwrap();
        let prefit = Transform::standardize_fit(["V"], &other).unwrap();
        let mut chain = TransformChain::new().with(prefit.clone());
        let out = chain.fit_apply(&fig4()).unwrap();
        assert_eq!(out, prefit.apply(&fig4()).unwrap());
        chain.fit(&fig4()).unwrap();
        assert_ne!(chain.transforms()[0], prefit);
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset> {
        (1usize..4, 1usize..30).prop_flat_map(|(cols, rows)| {
            prop::collection::vec(prop::collection::vec(-1e6f64..1e6, rows), cols).prop_map(|cols| {
                Dataset::new(
                    cols.into_iter()
                        .enumerate()
                        .map(|(i, c)| (format!("c{i}"), Column::from(c)))
                        .collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn window_row_count_and_content(d in dataset_strategy(), w in 1usize..8) {
            prop_assume!(d.row_count() >= w);
            let out = Transform::sliding_window(w).unwrap().apply(&d).unwrap();
            prop_assert_eq!(out.row_count(), d.row_count() - w + 1);
            for (name, _) in d.columns() {
                let input = d.f64_column(name).unwrap();
                for j in 0..w {
                    let lagged = out.f64_column(&format!("{name}_{j}")).unwrap();
                    for (i, v) in lagged.iter().enumerate() {
                        prop_assert_eq!(*v, input[i + j]);
                    }
                }
            }
        }

        #[test]
        fn explode_row_count(lists in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 0..5), 0..10)) {
            let total: usize = lists.iter().map(Vec::len).sum();
            let d = Dataset::new(vec![("t", Column::from(lists))]).unwrap();
            let out = Transform::explode(["t"]).apply(&d).unwrap();
            prop_assert_eq!(out.row_count(), total);
        }

        #[test]
        fn standardize_own_fit_data(d in dataset_strategy()) {
            let names: Vec<String> = d.names().to_vec();
            let t = Transform::standardize_fit(names.clone(), &d).unwrap();
            let out = t.apply(&d).unwrap();
            let Transform::Standardize(s) = &t else { unreachable!() };
            for (name, stats) in names.iter().zip(s.stats().unwrap()) {
                let v = out.f64_column(name).unwrap();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-10);
                if !stats.constant {
                    prop_assert!((std - 1.0).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn apply_is_pure(d in dataset_strategy()) {
            let chain = TransformChain::new()
                .with(Transform::standardize_fit(["c0"], &d).unwrap())
                .with(Transform::sliding_window(1).unwrap());
            prop_assert_eq!(chain.apply(&d).unwrap(), chain.apply(&d).unwrap());
        }
    }
}
