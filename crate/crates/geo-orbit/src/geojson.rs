//! Lane models as GeoJSON line strings.

use geo_orbit_core::geometry::{LocalTangentPlane, Polyline};
use geo_orbit_core::pipeline::LaneModel;
use serde_json::{json, Value};

/// A `FeatureCollection` with three `LineString`s per lane: centerline,
/// left and right boundary.
///
/// With an anchor, coordinates are `[lon, lat]` degrees. Without one they
/// stay in local meters, which most plotting tools accept as planar data.
pub fn lane_model_geojson(model: &LaneModel, anchor: Option<&LocalTangentPlane>) -> Value {
    let coords = |line: &Polyline| -> Value {
        line.points()
            .iter()
            .map(|&p| match anchor {
                Some(a) => {
                    let (lon, lat) = a.unproject(p);
                    json!([lon, lat])
                }
                None => json!([p.x, p.y]),
            })
            .collect()
    };
    let mut features = Vec::with_capacity(model.lane_count() * 3);
    for (i, lane) in model.lanes().iter().enumerate() {
        for (role, line) in [
            ("centerline", &lane.centerline),
            ("left_boundary", &lane.left_boundary),
            ("right_boundary", &lane.right_boundary),
        ] {
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords(line) },
                "properties": {
                    "scene_id": model.scene_id(),
                    "lane": i,
                    "role": role,
                    "direction_group": lane.direction_group,
                    "width": lane.width,
                },
            }));
        }
    }
    json!({
        "type": "FeatureCollection",
        "properties": { "crs": if anchor.is_some() { "wgs84" } else { "local_meters" } },
        "features": features,
    })
}

/// Number of distinct lanes in a collection written by
/// [`lane_model_geojson`].
pub fn lane_count(doc: &Value) -> usize {
    doc["features"]
        .as_array()
        .map(|fs| {
            fs.iter()
                .filter(|f| f["properties"]["role"] == "centerline")
                .count()
        })
        .unwrap_or(0)
}
