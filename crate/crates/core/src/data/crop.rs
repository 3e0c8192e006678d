use crate::error::{Error, Result};
use crate::grid::Grid;

/// Top-left anchors of the four corner crops, row-major.
pub fn corner_anchors(side: usize, crop: usize) -> Result<[(usize, usize); 4]> {
    if crop == 0 || crop > side {
        return Err(Error::CropTooLarge { crop, side });
    }
    let far = side - crop;
    Ok([(0, 0), (0, far), (far, 0), (far, far)])
}

/// Four `crop x crop` windows anchored at the corners; disjoint when `side >= 2 * crop`.
pub fn crop_four(image: &Grid, crop: usize) -> Result<[Grid; 4]> {
    let a = corner_anchors(image.side(), crop)?;
    Ok(a.map(|(i, j)| image.window(i, j, crop)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_tiling_at_twice_the_crop() {
        let g = Grid::from_fn(8, |i, j| (i * 8 + j) as f64);
        let c = crop_four(&g, 4).unwrap();
        assert_eq!(c[0].get(0, 0), 0.0);
        assert_eq!(c[1].get(0, 0), 4.0);
        assert_eq!(c[2].get(0, 0), 32.0);
        assert_eq!(c[3].get(3, 3), 63.0);
        let mut seen: Vec<f64> = c.iter().flat_map(|g| g.data().to_vec()).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..64).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn oversize_crop_rejected() {
        let g = Grid::filled(8, 0.0);
        assert!(matches!(
            crop_four(&g, 9),
            Err(Error::CropTooLarge { crop: 9, side: 8 })
        ));
    }
}
