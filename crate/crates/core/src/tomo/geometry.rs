use std::f64::consts::PI;

use super::{ImageGrid, TomoError};

/// Beam description passed to [`build_geometry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamSpec {
    Parallel,
    /// Equiangular fan; distances in mm.
    FanEquiangular { src_to_origin: f64, src_to_det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beam {
    Parallel,
    FanEquiangular,
}

/// A single ray in normal form: the set of points `p` with
/// `p · (-sin θ, cos θ) = s`, travelling along `(cos θ, sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub theta: f64,
    pub s: f64,
}

/// Immutable description of a 2D acquisition.
///
/// Parallel views at angle `θ` have rays travelling along `(cos θ, sin θ)`;
/// detector bin `k` sits at offset `(k - (n_det-1)/2) * det_spacing` along
/// `(-sin θ, cos θ)`. For the equiangular fan, `θ` is the direction of the
/// central ray, the source sits at `-src_to_origin * (cos θ, sin θ)` and
/// `det_spacing` is the angular pitch in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    beam: Beam,
    angles: Vec<f64>,
    angle_start: f64,
    angle_end: f64,
    n_det: usize,
    det_spacing: f64,
    src_to_origin: f64,
    src_to_det: f64,
    fov_radius: f64,
}

/// Equispaced acquisition over `[angle_start, angle_end)`.
pub fn build_geometry(
    beam: BeamSpec,
    angle_start: f64,
    angle_end: f64,
    n_angles: usize,
    n_det: usize,
    det_spacing: f64,
    fov_radius: f64,
) -> Result<ScanGeometry, TomoError> {
    let bad = |msg: String| Err(TomoError::InvalidGeometry(msg));
    if n_angles == 0 {
        return bad("n_angles must be >= 1".into());
    }
    if n_det == 0 {
        return bad("n_det must be >= 1".into());
    }
    if !(angle_start.is_finite() && angle_end.is_finite()) || angle_end <= angle_start {
        return bad(format!("angle range [{angle_start}, {angle_end}) is empty"));
    }
    if angle_end - angle_start > 2.0 * PI * (1.0 + 1e-12) {
        return bad("angular span exceeds 2π".into());
    }
    if !(det_spacing > 0.0 && det_spacing.is_finite()) {
        return bad(format!("detector spacing {det_spacing} must be positive"));
    }
    if !(fov_radius > 0.0 && fov_radius.is_finite()) {
        return bad(format!("fov radius {fov_radius} must be positive"));
    }
    let (beam, src_to_origin, src_to_det) = match beam {
        BeamSpec::Parallel => (Beam::Parallel, 0.0, 0.0),
        BeamSpec::FanEquiangular { src_to_origin, src_to_det } => {
            if !(src_to_det > src_to_origin && src_to_origin > fov_radius) {
                return bad(format!(
                    "fan geometry needs src_to_det ({src_to_det}) > src_to_origin ({src_to_origin}) > fov_radius ({fov_radius})"
                ));
            }
            if (n_det as f64) * det_spacing >= PI {
                return bad("fan angle must be below π".into());
            }
            (Beam::FanEquiangular, src_to_origin, src_to_det)
        }
    };
    let step = (angle_end - angle_start) / n_angles as f64;
    let angles = (0..n_angles).map(|k| angle_start + k as f64 * step).collect();
    Ok(ScanGeometry {
        beam,
        angles,
        angle_start,
        angle_end,
        n_det,
        det_spacing,
        src_to_origin,
        src_to_det,
        fov_radius,
    })
}

impl ScanGeometry {
    /// Desk-scale default: parallel beam over [0, π), 180 views, 256 bins of 1 mm.
    pub fn desk_default() -> Self {
        Self::parallel_for_size(128, 1.0, 0.0, PI, 180).expect("valid default geometry")
    }

    /// Parallel geometry matched to a `size`×`size` image: `2·size` bins at the
    /// pixel pitch, FOV radius equal to half the detector span.
    pub fn parallel_for_size(
        size: usize,
        pixel_size: f64,
        angle_start: f64,
        angle_end: f64,
        n_angles: usize,
    ) -> Result<Self, TomoError> {
        let n_det = 2 * size;
        build_geometry(
            BeamSpec::Parallel,
            angle_start,
            angle_end,
            n_angles,
            n_det,
            pixel_size,
            n_det as f64 * pixel_size / 2.0,
        )
    }

    /// Scanner-like equiangular fan: 835 bins at 1.095 mm pitch on a
    /// 946.7 mm source-detector arc, 538.52 mm source-origin distance and a
    /// 500 mm FOV. Pair with [`ScanGeometry::scanner_fan_grid`] for an image grid
    /// covering the FOV at the requested size.
    pub fn scanner_fan(angle_start: f64, angle_end: f64, n_angles: usize) -> Result<Self, TomoError> {
        let src_to_det = 946.7;
        build_geometry(
            BeamSpec::FanEquiangular { src_to_origin: 538.52, src_to_det },
            angle_start,
            angle_end,
            n_angles,
            835,
            1.095 / src_to_det,
            250.0,
        )
    }

    pub fn scanner_fan_grid(size: usize) -> ImageGrid {
        ImageGrid::square(size, 500.0 / size as f64)
    }

    pub fn beam(&self) -> Beam {
        self.beam
    }
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }
    pub fn n_det(&self) -> usize {
        self.n_det
    }
    pub fn det_spacing(&self) -> f64 {
        self.det_spacing
    }
    pub fn src_to_origin(&self) -> f64 {
        self.src_to_origin
    }
    pub fn src_to_det(&self) -> f64 {
        self.src_to_det
    }
    pub fn fov_radius(&self) -> f64 {
        self.fov_radius
    }
    pub fn angle_start(&self) -> f64 {
        self.angle_start
    }
    pub fn angle_end(&self) -> f64 {
        self.angle_end
    }
    /// Angular increment between consecutive views.
    pub fn angle_step(&self) -> f64 {
        (self.angle_end - self.angle_start) / self.angles.len() as f64
    }
    /// Angular span `[angle_start, angle_end]` covered by the views.
    pub fn coverage(&self) -> f64 {
        self.angle_end - self.angle_start
    }

    /// Offset of bin `k` from the central ray (mm or radians).
    #[inline]
    pub fn bin_offset(&self, k: usize) -> f64 {
        (k as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.det_spacing
    }

    /// Half fan angle, measured to the outer bin edge (fan only).
    pub fn half_fan_angle(&self) -> f64 {
        self.n_det as f64 * self.det_spacing / 2.0
    }

    #[inline]
    pub fn ray(&self, view: usize, bin: usize) -> Ray {
        let angle = self.angles[view];
        match self.beam {
            Beam::Parallel => Ray { theta: angle, s: self.bin_offset(bin) },
            Beam::FanEquiangular => {
                let gamma = self.bin_offset(bin);
                Ray { theta: angle + gamma, s: self.src_to_origin * gamma.sin() }
            }
        }
    }

    /// Stable fingerprint of every parameter, used to tag sinograms.
    pub fn id(&self) -> u64 {
        // FNV-1a over the raw bits
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.beam as u64);
        eat(self.angles.len() as u64);
        eat(self.angle_start.to_bits());
        eat(self.angle_end.to_bits());
        eat(self.n_det as u64);
        eat(self.det_spacing.to_bits());
        eat(self.src_to_origin.to_bits());
        eat(self.src_to_det.to_bits());
        eat(self.fov_radius.to_bits());
        h
    }

    /// Checks that the image's inscribed disk lies inside the FOV.
    pub fn check_grid(&self, grid: &ImageGrid) -> Result<(), TomoError> {
        let half = grid.width.min(grid.height) as f64 * grid.pixel_size / 2.0;
        if half > self.fov_radius * (1.0 + 1e-12) {
            return Err(TomoError::GeometryMismatch(format!(
                "image half-extent {half} mm exceeds FOV radius {} mm",
                self.fov_radius
            )));
        }
        Ok(())
    }
}
