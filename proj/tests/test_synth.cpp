#include <doctest.h>

#include "support.hpp"
#include "tsdf/synth.hpp"

using namespace tsdf;

TEST_CASE("primitive SDF spot values") {
  Primitive s;
  s.kind = Primitive::Kind::sphere;
  s.radius = 0.5;
  CHECK(primitive_sdf(s, Eigen::Vector3d(1, 0, 0)) == doctest::Approx(0.5));
  Primitive b;
  b.kind = Primitive::Kind::box;
  b.half_extents = Eigen::Vector3d::Constant(0.5);
  CHECK(primitive_sdf(b, Eigen::Vector3d::Zero()) == doctest::Approx(-0.5));
  CHECK(primitive_sdf(b, Eigen::Vector3d(1.5, 0, 0)) == doctest::Approx(1.0));
  Primitive t;
  t.kind = Primitive::Kind::torus;
  t.major = 0.5;
  t.minor = 0.2;
  CHECK(primitive_sdf(t, Eigen::Vector3d(0.5, 0, 0)) == doctest::Approx(-0.2));
  CHECK(primitive_sdf(t, Eigen::Vector3d(0, 0, 0)) == doctest::Approx(std::hypot(0.5, 0.0) - 0.2));
}

TEST_CASE("union SDF never overestimates distance") {
  SceneSpec spec = sphere_scene();
  Primitive extra;
  extra.kind = Primitive::Kind::box;
  extra.center = Eigen::Vector3d(0.5, 0.2, 0);
  extra.half_extents = Eigen::Vector3d(0.2, 0.3, 0.25);
  spec.primitives.push_back(extra);
  for (double blend : {0.0, 0.1}) {
    spec.blend = blend;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 500; ++k) {
      const Eigen::Vector3d p(u(rng), u(rng), u(rng));
      const double d = scene_sdf(spec, p);
      const double lo = std::min(primitive_sdf(spec.primitives[0], p), primitive_sdf(spec.primitives[1], p));
      CHECK(d <= lo + 1e-12);
    }
  }
}

TEST_CASE("head-on lit sphere: shading, unlit ambient, center depth") {
  SceneSpec spec = sphere_scene();
  spec.rig.elevations = {0.0};
  const Camera cam = orbit_cameras(spec)[0];
  spec.light = cam.center().normalized();
  const Mat shading = render_gt_shading(spec, cam);
  const RenderBundle b = render_gt(spec, cam);
  const int w = cam.width;
  const Eigen::Index c = static_cast<Eigen::Index>(w / 2) * w + w / 2;
  REQUIRE(b.mask(c, 0) == 1.0);
  // The center pixel ray is half a pixel off axis.
  CHECK(shading(c, 0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(b.depth(c, 0) == doctest::Approx(spec.rig.radius - 0.5).epsilon(1e-3));
  // Light from behind: every visible point is unlit.
  spec.light = -spec.light;
  const Mat back = render_gt_shading(spec, cam);
  for (Eigen::Index i = 0; i < b.pixels(); ++i)
    if (b.mask(i, 0) > 0.5) CHECK(back(i, 0) == doctest::Approx(spec.ambient));
}

TEST_CASE("ground-truth rgb is exactly albedo times shading; depth matches closed form") {
  const SceneSpec spec = sphere_scene();
  for (const Camera& cam : orbit_cameras(spec)) {
    const RenderBundle b = render_gt(spec, cam);
    const Mat s = render_gt_shading(spec, cam);
    CHECK((b.rgb.array() == (b.albedo.array() * s.array())).all());
    const Eigen::Vector3d o = cam.center();
    double worst = 0.0;
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const Eigen::Index i = static_cast<Eigen::Index>(y) * cam.width + x;
        const Ray r = pixel_ray(cam, x, y);
        const double bq = o.dot(r.dir), cq = o.squaredNorm() - 0.25, disc = bq * bq - cq;
        if (b.mask(i, 0) < 0.5) {
          CHECK((b.rgb.row(i).array() == 0.0).all());
          continue;
        }
        REQUIRE(disc >= 0.0);
        worst = std::max(worst, std::abs(b.depth(i, 0) - (-bq - std::sqrt(disc))));
      }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("orbit rig and held-out cameras") {
  const SceneSpec spec = sphere_scene();
  const auto train = orbit_cameras(spec), held = heldout_cameras(spec);
  CHECK(train.size() == 8);
  CHECK(held.size() == 2);
  for (const auto& c : train) {
    CHECK(c.center().norm() == doctest::Approx(spec.rig.radius));
    CHECK_NOTHROW(c.validate());
  }
  for (const auto& h : held)
    for (const auto& c : train) CHECK((h.center() - c.center()).norm() > 0.1);
}

TEST_CASE("scene JSON round trip and validation") {
  const SceneSpec spec = torus_scene();
  const SceneSpec back = parse_scene(scene_to_json(spec));
  CHECK(back.primitives.size() == spec.primitives.size());
  CHECK(back.primitives[0].major == spec.primitives[0].major);
  CHECK(back.light.isApprox(spec.light));
  CHECK(scene_to_json(back) == scene_to_json(spec));
  CHECK_THROWS_AS(parse_scene("{\"primitives\": [], \"bogus\": 1}"), std::invalid_argument);
  CHECK_THROWS_AS(parse_scene("not json"), std::invalid_argument);
  CHECK_THROWS_AS(parse_scene("{\"primitives\": [{\"type\": \"sphere\", \"radius\": -1}]}"), std::invalid_argument);
}

TEST_CASE("render_gt is deterministic") {
  const SceneSpec spec = box_scene();
  const Camera cam = orbit_cameras(spec)[3];
  const RenderBundle a = render_gt(spec, cam), b = render_gt(spec, cam);
  CHECK((a.rgb.array() == b.rgb.array()).all());
  CHECK((a.depth.array() == b.depth.array()).all());
}
