use super::{check_dims, ObjectiveError, ObjectiveResult, TargetImage};
use crate::raster::RasterImage;

/// `mean((rendered - target)^2)` with gradient `2 (rendered - target) / (H W)`.
pub fn mse_objective(rendered: &RasterImage, target: &TargetImage) -> Result<ObjectiveResult, ObjectiveError> {
    check_dims(rendered, target.image())?;
    let n = (rendered.width() * rendered.height()) as f64;
    let mut loss = 0.0;
    let grad = rendered
        .pixels()
        .iter()
        .zip(target.image().pixels())
        .map(|(r, t)| {
            let d = r - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(ObjectiveResult {
        loss: loss / n,
        grad,
        width: rendered.width(),
        height: rendered.height(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ViewId;
    use alloc::vec;

    #[test]
    fn identical_images_have_zero_loss() {
        let a = RasterImage::from_pixels(16, 16, (0..256).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let r = mse_objective(&a, &TargetImage::new(a.clone(), ViewId::X)).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn white_against_black_is_one() {
        let white = RasterImage::white(16, 16);
        let black = RasterImage::from_pixels(16, 16, vec![0.0; 256]).unwrap();
        let r = mse_objective(&white, &TargetImage::new(black, ViewId::X)).unwrap();
        assert_eq!(r.loss, 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let r = mse_objective(
            &RasterImage::white(16, 16),
            &TargetImage::new(RasterImage::white(16, 17), ViewId::X),
        );
        assert!(matches!(r, Err(ObjectiveError::DimensionMismatch { .. })));
    }
}
