//! Calibrate a camera from pixel/world control points and map a pixel back
//! onto the road plane.

use bridgeflow::geolabel::{project_to_pixel, project_to_world, reprojection_rms, solve_homography, PixelPoint, PlaneSpec};
use bridgeflow::simgen::CameraModel;

fn main() -> bridgeflow::Result<()> {
    let plane = PlaneSpec::default();
    let camera = CameraModel::default();
    let points = camera.control_points(&plane)?;
    for (px, w) in &points {
        println!("pixel ({:7.1}, {:7.1})  world ({:6.2}, {:6.2})", px.px, px.py, w.x, w.y);
    }

    let h = solve_homography(&points)?;
    println!("reprojection rms: {:.2e} px", reprojection_rms(&h, &points)?);
    for row in h.a {
        println!("  [{:12.6} {:12.6} {:12.6}]", row[0], row[1], row[2]);
    }

    let pixel = PixelPoint::new(640.0, 420.0);
    let world = project_to_world(&h, pixel)?;
    let back = project_to_pixel(&h, world)?;
    println!("pixel (640, 420) -> world ({:.3}, {:.3}) m -> pixel ({:.6}, {:.6})", world.x, world.y, back.px, back.py);
    Ok(())
}
