use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{LabelRaster, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        }
    }

    /// Neighbor indices of `i` inside a `w × h` grid.
    #[inline]
    pub(crate) fn neighbors(self, i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        self.offsets().iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then(|| ny as usize * w + nx as usize)
        })
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other:?}")),
        }
    }
}

/// Labels connected foreground pixels. Labels are assigned in row-major
/// order of each component's first pixel.
pub fn connected_components(mask: &Raster<bool>, connectivity: Connectivity) -> LabelRaster {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for n in connectivity.neighbors(i, w, h) {
                if mask.data[n] && labels[n] == 0 {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    LabelRaster { labels: Raster { width: w, height: h, data: labels }, count: next }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> Raster<bool> {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Raster { width: w, height: h, data }
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let m = mask(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Four).count, 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).count, 1);
    }

    #[test]
    fn labels_follow_row_major_order() {
        let m = mask(&["..#", "#..", "#.#"]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.count, 3);
        assert_eq!(l.labels.data, vec![0, 0, 1, 2, 0, 0, 2, 0, 3]);
        assert_eq!(l.sizes(), vec![5, 1, 2, 1]);
    }

    #[test]
    fn u_shape_is_one_component() {
        let m = mask(&["#.#", "#.#", "###"]);
        assert_eq!(connected_components(&m, Connectivity::Four).count, 1);
    }
}
