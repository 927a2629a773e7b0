//! Glue between tables, rendering, features and training data.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::regressor::{TrainingData, TypeData};
use crate::render::{render_candidates, PlotImage, RenderConfig};
use crate::stats::{true_features, FeatureVector};
use crate::table::{normalize, DataTable, DatasetSplit, PlotType};

/// A normalized table with its true features and rendered candidates.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: DataTable,
    pub truth: FeatureVector,
    pub images: BTreeMap<PlotType, PlotImage>,
}

pub fn prepare(t: &DataTable, cfg: &RenderConfig) -> Result<Prepared> {
    let table = normalize(t);
    let truth = true_features(&table)?;
    let images = render_candidates(&table, cfg)?;
    Ok(Prepared { table, truth, images })
}

pub fn prepare_all(tables: &[DataTable], cfg: &RenderConfig) -> Result<Vec<Prepared>> {
    tables.par_iter().map(|t| prepare(t, cfg)).collect()
}

/// Per-type training and validation pairs following `split`. Ids in the
/// split that are not among `prepared` are ignored.
pub fn training_data(prepared: &[Prepared], split: &DatasetSplit) -> TrainingData {
    let by_id: BTreeMap<&str, &Prepared> = prepared.iter().map(|p| (p.table.id.as_str(), p)).collect();
    let pairs = |ids: &[String], plot: PlotType| -> Vec<(PlotImage, FeatureVector)> {
        ids.iter()
            .filter_map(|id| by_id.get(id.as_str()))
            .map(|p| (p.images[&plot].clone(), p.truth))
            .collect()
    };
    PlotType::ALL
        .into_iter()
        .map(|plot| {
            (
                plot,
                TypeData {
                    train: pairs(&split.train, plot),
                    validation: pairs(&split.validation, plot),
                },
            )
        })
        .collect()
}
