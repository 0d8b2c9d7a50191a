use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MiouReport;

/// PartNetE categories grouped into five families for reporting.
pub const PARTNETE_GROUPS: [(&str, &[&str]); 5] = [
    (
        "Electronics & Computing Devices",
        &[
            "Keyboard", "Mouse", "Laptop", "Phone", "Camera", "USB", "Display", "Remote", "Printer", "Switch",
        ],
    ),
    (
        "Large Home Appliances",
        &["WashingMachine", "Dishwasher", "Refrigerator", "Oven", "Microwave"],
    ),
    (
        "Kitchen & Food-Related Items",
        &[
            "KitchenPot",
            "Kettle",
            "Toaster",
            "CoffeeMachine",
            "Faucet",
            "Dispenser",
            "Knife",
            "Bottle",
            "Bucket",
        ],
    ),
    (
        "Furniture & Household Infrastructure",
        &[
            "Table",
            "Chair",
            "FoldingChair",
            "StorageFurniture",
            "Door",
            "Window",
            "Lamp",
            "TrashCan",
            "Safe",
        ],
    ),
    (
        "Tools, Office Supplies, & Miscellaneous",
        &[
            "Stapler",
            "Scissors",
            "Pen",
            "Pliers",
            "Lighter",
            "Box",
            "Cart",
            "Globe",
            "Suitcase",
            "Eyeglasses",
            "Clock",
        ],
    ),
];

pub fn partnete_group(category: &str) -> Option<&'static str> {
    PARTNETE_GROUPS
        .iter()
        .find(|(_, members)| members.contains(&category))
        .map(|(g, _)| *g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeEval {
    pub shape_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Cluster count of the selected segmentation, when chosen from a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_k: Option<usize>,
    pub report: MiouReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub shapes: Vec<ShapeEval>,
    pub mean_miou: f64,
    pub category_means: BTreeMap<String, f64>,
    /// Mean of the category means within each PartNetE group.
    pub group_means: BTreeMap<String, f64>,
}

pub fn evaluation_report(shapes: Vec<ShapeEval>) -> EvaluationReport {
    let mean_miou = if shapes.is_empty() {
        0.0
    } else {
        shapes.iter().map(|s| s.report.miou).sum::<f64>() / shapes.len() as f64
    };
    let mut per_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &shapes {
        if let Some(c) = &s.category {
            per_cat.entry(c.clone()).or_default().push(s.report.miou);
        }
    }
    let category_means: BTreeMap<String, f64> = per_cat
        .into_iter()
        .map(|(c, v)| (c, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let mut per_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (c, m) in &category_means {
        if let Some(g) = partnete_group(c) {
            per_group.entry(g.to_string()).or_default().push(*m);
        }
    }
    let group_means = per_group
        .into_iter()
        .map(|(g, v)| (g, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    EvaluationReport {
        shapes,
        mean_miou,
        category_means,
        group_means,
    }
}
