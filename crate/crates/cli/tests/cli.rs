use std::path::{Path, PathBuf};

use rigidstyle::image::psnr;
use rigidstyle::synth::{scene, texture};
use rigidstyle::{FeatureMap, ImageBuffer};
use rigidstyle_cli::ft1::TensorFile;
use rigidstyle_cli::imageio::{read_image, write_png};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rigidstyle").chain(args.iter().copied());
    let code = rigidstyle_cli::run_with(argv, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path, name: &str, img: &ImageBuffer) -> PathBuf {
    let p = dir.join(name);
    write_png(&p, img).unwrap();
    p
}

fn max_abs(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn stylize_with_itself_reproduces_content() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(3, 40, 56));
    let o = dir.path().join("o.png");
    let r = run(&["stylize", "--content", s(&c), "--style", s(&c), "-o", s(&o)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let db = psnr(&read_image(&c).unwrap(), &read_image(&o).unwrap()).unwrap();
    assert!(db >= 50.0, "psnr {db}");
}

#[test]
fn sweep_alpha_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(4, 32, 32));
    let st = fixture(dir.path(), "s.png", &texture(5, 32, 32));
    let out = dir.path().join("sweep");
    let r = run(&["sweep-alpha", "--content", s(&c), "--style", s(&st), "--out-dir", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let pngs: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("alpha_"))
        .collect();
    assert_eq!(pngs.len(), 11);

    let content = read_image(&c).unwrap();
    let at_one = read_image(&out.join("alpha_1.00.png")).unwrap();
    assert!(psnr(&content, &at_one).unwrap() >= 50.0);

    let full = dir.path().join("full.png");
    assert_eq!(run(&["stylize", "--content", s(&c), "--style", s(&st), "-o", s(&full)]).code, 0);
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(out.join("alpha_0.00.png")).unwrap());

    let strip = read_image(&out.join("strip.png")).unwrap();
    assert_eq!((strip.height(), strip.width()), (32, 11 * 32));
}

#[test]
fn interpolate_endpoints_match_single_styles() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(6, 32, 32));
    let a = fixture(dir.path(), "a.png", &texture(7, 32, 32));
    let b = fixture(dir.path(), "b.png", &texture(8, 24, 40));
    let out = dir.path().join("interp");
    let r = run(&[
        "interpolate", "--content", s(&c), "--style", s(&a), "--style", s(&b), "--out-dir", s(&out), "--steps", "3",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for (file, style) in [("beta_1.00.png", &a), ("beta_0.00.png", &b)] {
        let single = dir.path().join("single.png");
        assert_eq!(run(&["stylize", "--content", s(&c), "--style", s(style), "-o", s(&single)]).code, 0);
        let x = read_image(&single).unwrap();
        let y = read_image(&out.join(file)).unwrap();
        assert!(max_abs(&x, &y) <= 1.0 / 255.0 + 1e-9, "{file}");
    }
    let one = run(&["interpolate", "--content", s(&c), "--style", s(&a), "--out-dir", s(&out)]);
    assert_eq!(one.code, 1);
}

#[test]
fn mask_and_video_commands() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(9, 32, 48));
    let a = fixture(dir.path(), "a.png", &texture(10, 32, 32));
    let b = fixture(dir.path(), "b.png", &texture(11, 32, 32));
    let left = fixture(dir.path(), "l.png", &ImageBuffer::from_fn(32, 48, |_, x, _| if x < 24 { 1.0 } else { 0.0 }));
    let right = fixture(dir.path(), "r.png", &ImageBuffer::from_fn(32, 48, |_, x, _| if x < 24 { 0.0 } else { 1.0 }));
    let o = dir.path().join("m.png");
    let r = run(&[
        "mask", "--content", s(&c), "--style", s(&a), "--style", s(&b), "--mask", s(&left), "--mask", s(&right), "-o",
        s(&o),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(read_image(&o).unwrap().width(), 48);
    let bad = run(&["mask", "--content", s(&c), "--style", s(&a), "--style", s(&b), "--mask", s(&left), "-o", s(&o)]);
    assert_eq!(bad.code, 1);

    let f1 = fixture(dir.path(), "f1.png", &scene(12, 32, 32));
    let vid = dir.path().join("vid");
    let f2 = fixture(dir.path(), "f2.png", &scene(18, 32, 32));
    let r = run(&["video", "--frames", s(&f1), s(&f1), s(&f2), "--style", s(&a), "--out-dir", s(&vid)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for i in 0..3 {
        assert!(vid.join(format!("frame_{i:05}.png")).exists());
    }
    assert_eq!(r.stdout.matches("amplification").count(), 2);
    assert_eq!(std::fs::read(vid.join("frame_00000.png")).unwrap(), std::fs::read(vid.join("frame_00001.png")).unwrap());
    let mixed = run(&["video", "--frames", s(&f1), s(&c), "--style", s(&a), "--out-dir", s(&vid)]);
    assert_eq!(mixed.code, 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(13, 48, 40));
    let st = fixture(dir.path(), "s.png", &texture(14, 40, 40));
    let (o1, o2) = (dir.path().join("1.png"), dir.path().join("2.png"));
    for o in [&o1, &o2] {
        assert_eq!(run(&["stylize", "--content", s(&c), "--style", s(&st), "--alpha", "0.3", "-o", s(o)]).code, 0);
    }
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
}

#[test]
fn png_round_trip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageBuffer::from_fn(9, 13, |y, x, c| ((y * 31 + x * 7 + c * 3) % 97) as f64 / 96.0);
    let p = fixture(dir.path(), "q.png", &img);
    assert!(max_abs(&img, &read_image(&p).unwrap()) <= 1.0 / 255.0 + 1e-6);
}

#[test]
fn ft_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let f = FeatureMap::from_fn(3, 2, 4, |c, y, x| (c as f64 - 1.0) * 0.25 + y as f64 * 1e-3 - x as f64 * 7.5).unwrap();
    let t = TensorFile::from_feature_map(&f);
    let src = dir.path().join("a.ft1");
    let dst = dir.path().join("b.ft1");
    t.write(&src).unwrap();
    let r = run(&["ft-dump", s(&src), "--copy-to", s(&dst)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("dims=3x2x4"));
    assert!(r.stdout.contains(&format!("checksum=fnv1a64:{:016x}", t.payload_checksum())));
    assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());
    assert_eq!(TensorFile::read(&dst).unwrap(), t);
}

#[test]
fn feature_mode_stylize_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let zc = FeatureMap::from_fn(6, 4, 5, |c, y, x| ((c * 7 + y * 3 + x) % 5) as f64 - 2.0 + 0.1 * c as f64).unwrap();
    let zs = FeatureMap::from_fn(6, 3, 3, |c, y, x| ((c + y * x) % 4) as f64 * 0.5 + (c * c) as f64 * 0.01).unwrap();
    let (pc, ps, po) = (dir.path().join("c.ft1"), dir.path().join("s.ft1"), dir.path().join("o.ft1"));
    TensorFile::from_feature_map(&zc).write(&pc).unwrap();
    TensorFile::from_feature_map(&zs).write(&ps).unwrap();
    let r = run(&["stylize", "--content", s(&pc), "--style", s(&ps), "-o", s(&po)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let out = TensorFile::read(&po).unwrap();
    assert_eq!(out.dims, vec![6, 4, 5]);

    let m = run(&["metrics", "--content", s(&pc), "--style", s(&ps), "--styled", s(&po)]);
    assert_eq!(m.code, 0, "{}", m.stderr);
    assert!(m.stdout.contains("content_loss=") && m.stdout.contains("style_loss="));

    let zero = dir.path().join("z.ft1");
    TensorFile::from_feature_map(&FeatureMap::zeros(6, 4, 5).unwrap()).write(&zero).unwrap();
    let d = run(&["stylize", "--content", s(&pc), "--style", s(&zero), "--deepest-op", "ra", "-o", s(&po)]);
    assert_eq!(d.code, 3, "{}", d.stderr);
    assert!(d.stderr.contains("error"));
}

#[test]
fn metrics_on_images() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(15, 32, 32));
    let st = fixture(dir.path(), "s.png", &texture(16, 32, 32));
    let r = run(&["metrics", "--content", s(&c), "--style", s(&st)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let value = |key: &str| -> f64 {
        let line = r.stdout.lines().find(|l| l.starts_with(key)).unwrap();
        line.split_whitespace().next().unwrap()[key.len()..].parse().unwrap()
    };
    assert!(value("style_loss=") <= value("baseline_style_loss="));
    assert!(value("content_loss=") <= value("baseline_content_loss="));
}

#[test]
fn bench_emits_key_values() {
    let r = run(&[
        "bench", "--channels", "8", "--dim", "32", "--reps", "3", "--transform-channels", "8", "--transform-size", "4",
        "--image-size", "16", "--format", "kv",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for label in ["rigid_align_thin", "rigid_align_dense", "transform_features", "stylize", "speedup_thin_vs_dense"] {
        assert!(r.stdout.contains(&format!("label={label} ")), "{label}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture(dir.path(), "c.png", &scene(17, 16, 16));
    let o = dir.path().join("o.png");
    let missing = dir.path().join("missing.png");
    assert_eq!(run(&["--help"]).code, 0);
    assert!(run(&["--help"]).stdout.contains("multiple of 2^L"));
    assert_eq!(run(&[]).code, 1);
    assert_eq!(run(&["frobnicate"]).code, 1);
    assert_eq!(run(&["stylize", "--content", s(&c)]).code, 1);
    assert_eq!(run(&["stylize", "--content", s(&c), "--style", s(&c), "--alpha", "1.5", "-o", s(&o)]).code, 1);
    assert_eq!(run(&["stylize", "--content", s(&c), "--style", s(&c), "--levels", "2,3", "-o", s(&o)]).code, 1);
    assert_eq!(run(&["stylize", "--content", s(&c), "--style", s(&c), "--beta", "0.5", "-o", s(&o)]).code, 1);

    let r = run(&["stylize", "--content", s(&missing), "--style", s(&c), "-o", s(&o)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("missing.png"));
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert_eq!(run(&["stylize", "--content", s(&junk), "--style", s(&c), "-o", s(&o)]).code, 2);
    assert_eq!(run(&["ft-dump", s(&junk)]).code, 2);
}
