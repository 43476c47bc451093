use crate::geometry::{obb_overlap, Obb, Pose2D};
use crate::scalar::Real;

/// Remembers the last detected stop sign in the ego frame so the controller can
/// keep braking after the sign drops out of view.
#[derive(Clone, Debug, Default)]
pub struct StopSignBuffer<T> {
    sign: Option<Obb<T>>,
    served: Option<Obb<T>>,
}

impl<T: Real> StopSignBuffer<T> {
    pub fn new() -> Self {
        StopSignBuffer {
            sign: None,
            served: None,
        }
    }

    /// Buffered (not yet served) sign in the current ego frame.
    pub fn sign(&self) -> Option<&Obb<T>> {
        self.sign.as_ref()
    }

    /// Advances the buffer by one control step.
    ///
    /// `ego_motion` is the current ego pose expressed in the previous ego frame,
    /// `detections` are sign boxes in the current ego frame and `ego_box` is the
    /// ego footprint in its own frame. Returns whether the controller must brake.
    pub fn step(
        &mut self,
        detections: &[Obb<T>],
        ego_motion: &Pose2D<T>,
        speed: T,
        ego_box: &Obb<T>,
    ) -> bool {
        if let Some(s) = self.sign.as_mut() {
            *s = s.to_local(ego_motion);
        }
        if let Some(s) = self.served.as_mut() {
            *s = s.to_local(ego_motion);
        }
        if let Some(s) = self.served {
            if !obb_overlap(&s, ego_box) {
                self.served = None;
            }
        }

        let nearest = detections.iter().min_by(|a, b| {
            a.center
                .norm()
                .partial_cmp(&b.center.norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if let Some(d) = nearest {
            let already_served = self.served.is_some_and(|s| obb_overlap(&s, d));
            if !already_served {
                self.sign = Some(*d);
            }
        }

        let on_sign = self.sign.is_some_and(|s| obb_overlap(&s, ego_box));
        if on_sign && speed < T::lit(0.1) {
            self.served = self.sign.take();
            return false;
        }
        on_sign
    }
}

/// Functional form of [`StopSignBuffer::step`].
pub fn stop_sign_buffer_step<T: Real>(
    mut buffer: StopSignBuffer<T>,
    detections: &[Obb<T>],
    ego_motion: &Pose2D<T>,
    speed: T,
    ego_box: &Obb<T>,
) -> (StopSignBuffer<T>, bool) {
    let brake = buffer.step(detections, ego_motion, speed, ego_box);
    (buffer, brake)
}
