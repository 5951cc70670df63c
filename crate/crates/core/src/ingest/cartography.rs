//! Polygon layers (parcels, blocks, project area) read from GeoJSON.

use std::collections::BTreeSet;

use geojson::{GeoJson, GeometryValue, Position};
use serde::{Deserialize, Serialize};

use crate::domain::{Footprint, LayerFeature, LayerKind, MapLayer, Project, Ring};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub kind: LayerKind,
    pub features: usize,
    /// Keys referenced by cadastral buildings but absent from the layer.
    pub missing_in_layer: Vec<String>,
    /// Layer keys no cadastral building refers to.
    pub unreferenced: Vec<String>,
}

fn ring(index: usize, positions: &[Position]) -> Result<Ring> {
    let mut out = Vec::with_capacity(positions.len());
    for p in positions {
        let xy = p.as_slice();
        if xy.len() < 2 || !xy[0].is_finite() || !xy[1].is_finite() {
            return Err(Error::InvalidGeometry { index, reason: "position needs two finite numbers".into() });
        }
        out.push([xy[0], xy[1]]);
    }
    if out.len() < 4 {
        return Err(Error::InvalidGeometry { index, reason: format!("ring has {} positions, need ≥ 4", out.len()) });
    }
    if out.first() != out.last() {
        return Err(Error::InvalidGeometry { index, reason: "ring is not closed".into() });
    }
    Ok(out)
}

fn polygon(index: usize, rings: &[Vec<Position>]) -> Result<Vec<Ring>> {
    if rings.is_empty() {
        return Err(Error::InvalidGeometry { index, reason: "polygon without rings".into() });
    }
    rings.iter().map(|r| ring(index, r)).collect()
}

/// Parses a FeatureCollection of Polygon/MultiPolygon features keyed by `key_property`.
pub fn parse_layer(text: &str, kind: LayerKind, key_property: &str) -> Result<MapLayer> {
    let geojson: GeoJson = text.parse().map_err(|e: geojson::Error| Error::NotAFeatureCollection(e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = geojson else {
        return Err(Error::NotAFeatureCollection("top-level object is not a FeatureCollection".into()));
    };
    let mut features = Vec::with_capacity(fc.features.len());
    let mut keys = BTreeSet::new();
    for (index, feature) in fc.features.iter().enumerate() {
        let key = match feature.property(key_property) {
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(Error::MissingKeyProperty(index)),
        };
        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| Error::InvalidGeometry { index, reason: "feature has no geometry".into() })?;
        let footprint = match &geometry.value {
            GeometryValue::Polygon { coordinates } => Footprint::Polygon(polygon(index, coordinates)?),
            GeometryValue::MultiPolygon { coordinates } => {
                Footprint::MultiPolygon(coordinates.iter().map(|p| polygon(index, p)).collect::<Result<_>>()?)
            }
            other => {
                return Err(Error::InvalidGeometry {
                    index,
                    reason: format!("{} is not a polygonal geometry", other.type_name()),
                })
            }
        };
        if !keys.insert(key.clone()) {
            return Err(Error::DuplicateFeatureKey(key));
        }
        features.push(LayerFeature { key, geometry: footprint });
    }
    if kind == LayerKind::ProjectArea && features.len() != 1 {
        return Err(Error::Invalid(format!("project area layer needs exactly one feature, got {}", features.len())));
    }
    features.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(MapLayer { kind, key_property: key_property.to_string(), features })
}

/// Compares layer keys with the keys cadastral buildings refer to: block keys
/// for Blocks, parcel keys for Parcels. The project area has nothing to match.
pub fn match_report(project: &Project, layer: &MapLayer) -> MatchReport {
    let referenced: BTreeSet<String> = match layer.kind {
        LayerKind::Blocks => project.buildings.values().filter_map(|b| b.block_key()).collect(),
        LayerKind::Parcels => {
            project.buildings.values().filter_map(|b| b.cadastral_key.as_ref().map(|k| k.parcel_key())).collect()
        }
        LayerKind::ProjectArea => BTreeSet::new(),
    };
    let in_layer: BTreeSet<String> = layer.features.iter().map(|f| f.key.clone()).collect();
    let (missing_in_layer, unreferenced) = if layer.kind == LayerKind::ProjectArea {
        (Vec::new(), Vec::new())
    } else {
        (referenced.difference(&in_layer).cloned().collect(), in_layer.difference(&referenced).cloned().collect())
    };
    MatchReport { kind: layer.kind, features: layer.features.len(), missing_in_layer, unreferenced }
}

/// Parses and stores a layer, replacing any previous layer of the same kind.
pub fn load_cartography(project: &mut Project, text: &str, kind: LayerKind, key_property: &str) -> Result<MatchReport> {
    let layer = parse_layer(text, kind, key_property)?;
    let report = match_report(project, &layer);
    project.layers.insert(kind, layer);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Building, CadastralKey};
    use chrono::NaiveDate;

    fn square(key: &str, x0: f64, y0: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"MANZ":"{key}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#,
            x1 = x0 + 1.0,
            y1 = y0 + 1.0
        )
    }

    fn collection(features: &[String]) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
    }

    fn project_with_blocks(blocks: &[&str]) -> Project {
        let mut p = Project::new("p", "p", NaiveDate::from_ymd_opt(2007, 1, 1).unwrap());
        for (i, m) in blocks.iter().enumerate() {
            let key = CadastralKey {
                departamento: "08".into(),
                centro: "01".into(),
                distrito: "02".into(),
                manzana: (*m).into(),
                lote: i.to_string(),
                edificacion: "1".into(),
            };
            p.buildings.insert(i as u64 + 1, Building::cadastral(i as u64 + 1, key));
        }
        p
    }

    #[test]
    fn single_project_area() {
        let mut p = project_with_blocks(&[]);
        let report =
            load_cartography(&mut p, &collection(&[square("AREA", 0.0, 0.0)]), LayerKind::ProjectArea, "MANZ").unwrap();
        assert_eq!(report.features, 1);
        assert_eq!(p.layers[&LayerKind::ProjectArea].features.len(), 1);
    }

    #[test]
    fn block_missing_from_layer_is_reported() {
        let mut p = project_with_blocks(&["U205", "U206"]);
        let text = collection(&[square("08-01-02-U205", 0.0, 0.0), square("08-01-02-U999", 2.0, 0.0)]);
        let report = load_cartography(&mut p, &text, LayerKind::Blocks, "MANZ").unwrap();
        assert_eq!(report.missing_in_layer, vec!["08-01-02-U206".to_string()]);
        assert_eq!(report.unreferenced, vec!["08-01-02-U999".to_string()]);
    }

    #[test]
    fn feature_without_key() {
        let text = collection(&[square("A", 0.0, 0.0), square("B", 1.0, 0.0).replace("MANZ", "OTHER")]);
        assert!(matches!(parse_layer(&text, LayerKind::Blocks, "MANZ"), Err(Error::MissingKeyProperty(1))));
    }

    #[test]
    fn rejects_non_collections_and_bad_rings() {
        assert!(matches!(
            parse_layer(&square("A", 0.0, 0.0), LayerKind::Blocks, "MANZ"),
            Err(Error::NotAFeatureCollection(_))
        ));
        assert!(matches!(parse_layer("not json", LayerKind::Blocks, "MANZ"), Err(Error::NotAFeatureCollection(_))));
        let open = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"MANZ":"A"},
            "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]}"#;
        assert!(matches!(parse_layer(open, LayerKind::Blocks, "MANZ"), Err(Error::InvalidGeometry { index: 0, .. })));
        let point = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"MANZ":"A"},
            "geometry":{"type":"Point","coordinates":[0,0]}}]}"#;
        assert!(matches!(parse_layer(point, LayerKind::Blocks, "MANZ"), Err(Error::InvalidGeometry { .. })));
    }

    #[test]
    fn numeric_keys_and_duplicates() {
        let text = collection(&[square("A", 0.0, 0.0).replace("\"A\"", "206")]);
        let layer = parse_layer(&text, LayerKind::Blocks, "MANZ").unwrap();
        assert_eq!(layer.features[0].key, "206");
        let dup = collection(&[square("A", 0.0, 0.0), square("A", 1.0, 0.0)]);
        assert!(matches!(parse_layer(&dup, LayerKind::Blocks, "MANZ"), Err(Error::DuplicateFeatureKey(_))));
    }
}
