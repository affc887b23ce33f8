use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{FusionError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `N × d_y` real responses.
    Real(DMatrix<f64>),
    /// Class labels in `0..classes`.
    Labels { labels: Vec<usize>, classes: usize },
}

/// Row-aligned features and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    targets: Targets,
}

impl Dataset {
    pub fn regression(features: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != targets.nrows() {
            return Err(FusionError::DimensionMismatch {
                expected: features.nrows(),
                found: targets.nrows(),
            });
        }
        Ok(Self {
            features,
            targets: Targets::Real(targets),
        })
    }

    pub fn classification(features: DMatrix<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(FusionError::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if classes == 0 {
            return Err(FusionError::InvalidArgument("need at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(FusionError::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            features,
            targets: Targets::Labels { labels, classes },
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn real_targets(&self) -> Result<&DMatrix<f64>> {
        match &self.targets {
            Targets::Real(y) => Ok(y),
            Targets::Labels { .. } => Err(FusionError::InvalidArgument(
                "expected real-valued targets, found class labels".into(),
            )),
        }
    }

    pub fn labels(&self) -> Result<(&[usize], usize)> {
        match &self.targets {
            Targets::Labels { labels, classes } => Ok((labels, *classes)),
            Targets::Real(_) => Err(FusionError::InvalidArgument(
                "expected class labels, found real-valued targets".into(),
            )),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        let targets = match &self.targets {
            Targets::Real(y) => Targets::Real(y.select_rows(indices)),
            Targets::Labels { labels, classes } => Targets::Labels {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        };
        Dataset { features, targets }
    }

    /// Stacks datasets with matching shapes.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or(FusionError::EmptyInput("nothing to concatenate"))?;
        let cols = first.feature_dim();
        let rows: usize = parts.iter().map(|p| p.len()).sum();
        let mut features = DMatrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            crate::error::check_dim(cols, p.feature_dim())?;
            features.rows_mut(offset, p.len()).copy_from(&p.features);
            offset += p.len();
        }
        match &first.targets {
            Targets::Real(y0) => {
                let mut y = DMatrix::zeros(rows, y0.ncols());
                let mut offset = 0;
                for p in parts {
                    let yp = p.real_targets()?;
                    crate::error::check_dim(y0.ncols(), yp.ncols())?;
                    y.rows_mut(offset, p.len()).copy_from(yp);
                    offset += p.len();
                }
                Dataset::regression(features, y)
            }
            Targets::Labels { classes, .. } => {
                let mut labels = Vec::with_capacity(rows);
                for p in parts {
                    let (l, c) = p.labels()?;
                    crate::error::check_dim(*classes, c)?;
                    labels.extend_from_slice(l);
                }
                Dataset::classification(features, labels, *classes)
            }
        }
    }

    /// Writes a header row and one sample per line; targets come last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.feature_dim()).map(|j| format!("x{j}")).collect();
        match &self.targets {
            Targets::Real(y) => header.extend((0..y.ncols()).map(|j| format!("y{j}"))),
            Targets::Labels { .. } => header.push("label".into()),
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            match &self.targets {
                Targets::Real(y) => row.extend(y.row(i).iter().map(|v| v.to_string())),
                Targets::Labels { labels, .. } => row.push(labels[i].to_string()),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The portion of the data held by one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledShard {
    pub agent_id: usize,
    pub data: Dataset,
}

impl LabeledShard {
    pub fn new(agent_id: usize, data: Dataset) -> Self {
        Self { agent_id, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
