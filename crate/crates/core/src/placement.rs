//! Input-electrode placement from a grayscale raster.
//!
//! The image is block-averaged down to the node resolution of a rectangular
//! region of the grid and the `k` brightest coarse pixels become input
//! nodes. The top image row maps to the top row of the region. Ties go to
//! the coarse pixel that comes first in the region's row-major order
//! (bottom row first, like the grid itself).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Region;
use crate::error::{Error, Result};
use crate::graph::{NodeId, PlexusGraph};

/// Row-major grayscale image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Intensity {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Intensity {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "image of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Intensity { width, height, data })
    }

    /// Loads any 8/16-bit grayscale or color PNM (PGM `P2`/`P5`, PPM, PBM); color is converted to luma.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read image {}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(f64::from).collect();
        Self::new(w as usize, h as usize, data)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub path: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPlacement {
    pub nodes: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<ImageSource>,
}

impl InputPlacement {
    /// TOML `[[inputs]]` entries for every selected node.
    pub fn to_config_fragment(&self, amplitude: f64, t_start: f64, t_stop: f64) -> String {
        use crate::units::{format, TIME, VOLTAGE};
        let mut out = String::new();
        if let Some(src) = &self.source {
            out.push_str(&format!("# from {} ({}x{})\n", src.path, src.width, src.height));
        }
        for n in &self.nodes {
            out.push_str(&format!(
                "[[inputs]]\nnode = {n}\namplitude = \"{}\"\nt_start = \"{}\"\nt_stop = \"{}\"\n\n",
                format(amplitude, &VOLTAGE),
                format(t_start, &TIME),
                format(t_stop, &TIME)
            ));
        }
        out
    }
}

/// Block-mean downsampling to `cols x rows`, row 0 at the top like the input.
///
/// Block `c` covers source columns `[c*W/cols, (c+1)*W/cols)` (integer division).
pub fn downsample(image: &Intensity, cols: usize, rows: usize) -> Result<Vec<f64>> {
    if cols == 0 || rows == 0 || cols > image.width || rows > image.height {
        return Err(Error::InvalidArgument(format!(
            "cannot block-average a {}x{} image to {cols}x{rows}",
            image.width, image.height
        )));
    }
    let mut out = vec![0.0; cols * rows];
    for r in 0..rows {
        let (y0, y1) = (r * image.height / rows, (r + 1) * image.height / rows);
        for c in 0..cols {
            let (x0, x1) = (c * image.width / cols, (c + 1) * image.width / cols);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += image.at(x, y);
                }
            }
            out[r * cols + c] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    Ok(out)
}

#[derive(PartialEq)]
struct Candidate {
    value: f64,
    order: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // max-heap: brighter first, then earlier in row-major order
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Selected coarse pixels as `(col, row)` in region coordinates, brightest first.
pub fn select_coarse_pixels(image: &Intensity, k: usize, region: &Region) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > region.node_count() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} nodes of the region",
            region.node_count()
        )));
    }
    if image.data.is_empty() {
        return Err(Error::InvalidArgument("image is empty".into()));
    }
    let coarse = downsample(image, region.width, region.height)?;
    let mut heap = BinaryHeap::with_capacity(coarse.len());
    for row in 0..region.height {
        let image_row = region.height - 1 - row;
        for col in 0..region.width {
            heap.push(Candidate {
                value: coarse[image_row * region.width + col],
                order: row * region.width + col,
            });
        }
    }
    Ok((0..k)
        .map(|_| {
            let c = heap.pop().expect("k checked against region size");
            (c.order % region.width, c.order / region.width)
        })
        .collect())
}

pub fn place_inputs_from_image(
    image: &Intensity,
    k: usize,
    graph: &PlexusGraph,
    region: &Region,
) -> Result<InputPlacement> {
    if !region.fits(graph) {
        return Err(Error::InvalidArgument(format!(
            "region {}x{} at ({}, {}) does not fit the {}x{} grid",
            region.width,
            region.height,
            region.col,
            region.row,
            graph.width(),
            graph.height()
        )));
    }
    let nodes = select_coarse_pixels(image, k, region)?
        .into_iter()
        .map(|(c, r)| graph.node_at(region.col + c, region.row + r))
        .collect::<Result<Vec<_>>>()?;
    Ok(InputPlacement { nodes, source: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PlexusGraph {
        PlexusGraph::build_grid(10, 10, 25.0, 0.0, 0).unwrap()
    }

    fn region() -> Region {
        Region {
            col: 2,
            row: 3,
            width: 4,
            height: 4,
        }
    }

    #[test]
    fn uniform_image_picks_region_origin() {
        let img = Intensity::new(8, 8, vec![0.5; 64]).unwrap();
        let p = place_inputs_from_image(&img, 1, &grid(), &region()).unwrap();
        assert_eq!(p.nodes, vec![3 * 10 + 2]);
        let p = place_inputs_from_image(&img, 3, &grid(), &region()).unwrap();
        assert_eq!(p.nodes, vec![32, 33, 34]);
    }

    #[test]
    fn bright_pixel_maps_with_vertical_flip() {
        for (x, y) in [(0, 0), (7, 0), (3, 5), (6, 7)] {
            let mut data = vec![0.0; 64];
            data[y * 8 + x] = 255.0;
            let img = Intensity::new(8, 8, data).unwrap();
            let p = place_inputs_from_image(&img, 1, &grid(), &region()).unwrap();
            // argmax of the 2x2 block means
            let (cc, cr_img) = (x / 2, y / 2);
            let expected = (3 + (3 - cr_img)) * 10 + 2 + cc;
            assert_eq!(p.nodes, vec![expected]);
        }
    }

    #[test]
    fn block_mean() {
        let img = Intensity::new(4, 2, vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(downsample(&img, 2, 1).unwrap(), vec![2.0, 6.0]);
        assert_eq!(downsample(&img, 4, 2).unwrap(), img.data);
        assert!(downsample(&img, 5, 1).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let img = Intensity::new(8, 8, vec![0.0; 64]).unwrap();
        assert!(place_inputs_from_image(&img, 0, &grid(), &region()).is_err());
        assert!(place_inputs_from_image(&img, 17, &grid(), &region()).is_err());
        let outside = Region {
            col: 8,
            row: 8,
            width: 4,
            height: 4,
        };
        assert!(place_inputs_from_image(&img, 1, &grid(), &outside).is_err());
        assert!(Intensity::new(0, 0, vec![]).is_err());
    }

    #[test]
    fn fragment_parses_as_inputs() {
        let p = InputPlacement {
            nodes: vec![5, 9],
            source: None,
        };
        let frag = p.to_config_fragment(1.5, 0.0, 1e-3);
        let cfg = crate::config::SimConfig::from_toml(&format!("t_end = 0.01\n{frag}")).unwrap();
        assert_eq!(cfg.inputs.len(), 2);
        assert_eq!(cfg.inputs[1].amplitude, 1.5);
        assert_eq!(cfg.inputs[1].t_stop, 1e-3);
    }
}
