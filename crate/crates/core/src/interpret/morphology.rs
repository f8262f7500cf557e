//! Binary morphology with a 3x3 square element. Pixels outside the image
//! count as background.

use crate::data::BinaryMask;

fn filter(mask: &BinaryMask, keep: impl Fn(usize) -> bool) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    BinaryMask::from_fn(h, w, |y, x| {
        let mut on = 0;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                if yy >= 0
                    && xx >= 0
                    && (yy as usize) < h
                    && (xx as usize) < w
                    && mask.get(yy as usize, xx as usize)
                {
                    on += 1;
                }
            }
        }
        keep(on)
    })
}

pub fn erode(mask: &BinaryMask) -> BinaryMask {
    filter(mask, |on| on == 9)
}

pub fn dilate(mask: &BinaryMask) -> BinaryMask {
    filter(mask, |on| on > 0)
}

/// Erosion then dilation, `iterations` times each.
pub fn morphological_open(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = erode(&m);
    }
    for _ in 0..iterations {
        m = dilate(&m);
    }
    m
}
