use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddimstego_core::chaos::RealKey;
use ddimstego_core::integrity::{verify, Verdict};
use ddimstego_core::pipeline::{psnr, single_pixel_tamper, Scheme};
use ddimstego_core::raster::{io, PixelGrid};
use serde_json::Value;
use tempfile::TempDir;

const KEY_LINE: &str = "mu=3.799200023214331;a0=0.8888564633215454";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ddimstego"));
    c.env_remove("STEGANO_BACKEND");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(f.path("k.key"), format!("{KEY_LINE}\n")).unwrap();
        io::save(&smooth(128, 128), f.path("secret.png")).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn hide(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "hide".to_owned(),
            self.p("secret.png"),
            "--kpri".into(),
            "a butterfly".into(),
            "--kpub".into(),
            "a flower".into(),
            "-o".into(),
            self.p(out),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().unwrap()
    }
}

fn smooth(w: usize, h: usize) -> PixelGrid {
    PixelGrid::from_fn(w, h, |r, c| {
        (128.0 + 30.0 * (r as f64 / 21.0).sin() * (c as f64 / 17.0).cos()).round() as u8
    })
}

fn example_scheme() -> Scheme {
    Scheme::RealKey(KEY_LINE.parse::<RealKey>().unwrap())
}

#[test]
fn keygen_is_seeded_and_self_consistent() {
    let f = Fixture::new();
    let a = run(&["keygen", "--seed", "42", "--out", &f.p("a.key")]);
    let b = run(&["keygen", "--seed", "42", "--out", &f.p("b.key")]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    assert_eq!(std::fs::read(f.path("a.key")).unwrap(), std::fs::read(f.path("b.key")).unwrap());
    let report = json(&a);
    assert_eq!(report["bits"], 102);
    let word = report["codeword"].as_str().unwrap();
    assert_eq!(word.len(), 26);
    let from_file: RealKey = std::fs::read_to_string(f.path("a.key")).unwrap().parse().unwrap();
    assert_eq!(from_file.encode().to_hex(), word);
    assert_ne!(json(&run(&["keygen", "--seed", "43"]))["codeword"], report["codeword"]);
}

#[test]
fn hide_verify_reveal_round_trip() {
    let f = Fixture::new();
    let key = f.p("k.key");
    let h = f.hide("stego.png", &["--key", &key, "--container-out", &f.p("container.png")]);
    assert_eq!(code(&h), 0, "{}", String::from_utf8_lossy(&h.stderr));
    let report = json(&h);
    assert_eq!(report["scheme"], "real-key");
    let e = &report["embedding"];
    assert_eq!(e["required_positions"].as_u64().unwrap(), 5 * e["payload_bits"].as_u64().unwrap());

    let v = run(&["verify", &f.p("stego.png"), "--key", &key]);
    assert_eq!(code(&v), 0);
    let line = String::from_utf8(v.stdout.clone()).unwrap();
    assert_eq!(line.trim_end().lines().count(), 1);
    assert_eq!(json(&v)["verdict"], "authentic");

    let r = run(&["reveal", &f.p("stego.png"), "--key", &key, "-o", &f.p("rec.png")]);
    assert_eq!(code(&r), 0);
    let rr = json(&r);
    assert_eq!(rr["kpri"], "a butterfly");
    assert_eq!(rr["kpub"], "a flower");
    let secret = io::load_gray(f.path("secret.png")).unwrap();
    let rec = io::load_gray(f.path("rec.png")).unwrap();
    assert!(psnr(&secret, &rec) >= 40.0);
}

#[test]
fn hide_is_deterministic() {
    let f = Fixture::new();
    let key = f.p("k.key");
    assert_eq!(code(&f.hide("a.png", &["--key", &key])), 0);
    assert_eq!(code(&f.hide("b.png", &["--key", &key])), 0);
    assert_eq!(std::fs::read(f.path("a.png")).unwrap(), std::fs::read(f.path("b.png")).unwrap());
}

#[test]
fn tampered_and_replaced_inputs_are_refused() {
    let f = Fixture::new();
    let key = f.p("k.key");
    assert_eq!(code(&f.hide("stego.png", &["--key", &key])), 0);
    let stego = io::load_gray(f.path("stego.png")).unwrap();

    let bad = (0..stego.height())
        .flat_map(|r| (0..stego.width()).map(move |c| (r, c)))
        .map(|(r, c)| single_pixel_tamper(&stego, r, c))
        .find(|g| verify(g, &example_scheme()) == Verdict::Tampered)
        .expect("some single-pixel change keeps the stream well formed");
    io::save(&bad, f.path("bad.png")).unwrap();
    let v = run(&["verify", &f.p("bad.png"), "--key", &key]);
    assert_eq!(code(&v), 2);
    assert_eq!(json(&v)["verdict"], "tampered");

    let strict = run(&["reveal", &f.p("bad.png"), "--key", &key, "-o", &f.p("x.png")]);
    assert_eq!(code(&strict), 2);
    assert!(!f.path("x.png").exists());
    let loose = run(&["reveal", &f.p("bad.png"), "--key", &key, "--permissive", "-o", &f.p("y.png")]);
    assert_eq!(code(&loose), 2);
    assert_eq!(json(&loose)["verdict"], "tampered");
    assert!(f.path("y.png").exists());

    let v = run(&["verify", &f.p("secret.png"), "--key", &key]);
    assert_eq!(code(&v), 3);
    assert_eq!(json(&v)["verdict"], "malformed");
}

#[test]
fn wrong_key_is_not_authentic() {
    let f = Fixture::new();
    assert_eq!(code(&f.hide("stego.png", &["--key", &f.p("k.key")])), 0);
    let other = run(&["keygen", "--seed", "1"]);
    let word = json(&other)["codeword"].as_str().unwrap().to_owned();
    let v = run(&["verify", &f.p("stego.png"), "--codeword", &word]);
    assert_ne!(code(&v), 0);
}

#[test]
fn attack_sim_reports_detection() {
    let f = Fixture::new();
    let key = f.p("k.key");
    assert_eq!(code(&f.hide("stego.png", &["--key", &key, "--container-out", &f.p("c.png")])), 0);
    let a = run(&[
        "attack-sim",
        &f.p("stego.png"),
        "--key",
        &key,
        "--replacement",
        &f.p("c.png"),
        "--trials",
        "300",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&a), 0);
    let r = json(&a);
    assert_eq!(r["baseline"], "authentic");
    assert_eq!(r["replacement"]["detected"], true);
    assert_eq!(r["single_pixel"]["undetected"], 0);
    let s = &r["single_pixel"];
    assert_eq!(s["tampered"].as_u64().unwrap() + s["malformed"].as_u64().unwrap(), 300);
}

#[test]
fn exit_codes_for_usage_and_capacity() {
    let f = Fixture::new();
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["hide", &f.p("secret.png")])), 1);
    // Real-key is the default scheme and needs a key.
    assert_eq!(code(&f.hide("s.png", &[])), 1);
    assert_eq!(code(&f.hide("s.png", &["--key", &f.p("missing.key")])), 1);
    assert_eq!(code(&f.hide("s.png", &["--codeword", "zz"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);

    let noisy = PixelGrid::from_fn(12, 12, |r, c| ((r * 97 + c * 31) % 251) as u8);
    io::save(&noisy, f.path("noisy.png")).unwrap();
    let o = run(&[
        "hide",
        &f.p("noisy.png"),
        "--kpri",
        "a",
        "--kpub",
        "b",
        "-o",
        &f.p("n.png"),
        "--key",
        &f.p("k.key"),
    ]);
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("needs") && err.contains("available"), "{err}");
}

#[test]
fn separator_in_condition_is_a_usage_error() {
    let f = Fixture::new();
    let o = bin()
        .args(["hide", &f.p("secret.png"), "--kpri", "a#b", "--kpub", "c", "-o", &f.p("s.png")])
        .args(["--key", &f.p("k.key")])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn without_key_scheme_warns_and_round_trips() {
    let f = Fixture::new();
    let h = f.hide("stego.png", &["--scheme", "without-key"]);
    assert_eq!(code(&h), 0);
    assert!(String::from_utf8_lossy(&h.stderr).contains("warning"));
    let e = &json(&h)["embedding"];
    assert_eq!(e["required_positions"], e["payload_bits"]);
    let v = run(&["verify", &f.p("stego.png"), "--scheme", "without-key"]);
    assert_eq!(code(&v), 0);
    assert_ne!(code(&run(&["verify", &f.p("stego.png"), "--key", &f.p("k.key")])), 0);
}

#[test]
fn config_file_and_environment_precedence() {
    let f = Fixture::new();
    let cfg = f.path("run.conf");
    std::fs::write(&cfg, format!("# defaults\nscheme = real-key\nkey = {}\nbackend = toy:bogus\n", f.p("k.key"))).unwrap();
    let cfg = cfg.display().to_string();

    // Config backend is invalid.
    assert_eq!(code(&f.hide("a.png", &["--config", &cfg])), 1);
    // The environment beats the config file.
    let o = bin()
        .env("STEGANO_BACKEND", "toy:analytic")
        .args(["--config", &cfg, "hide", &f.p("secret.png"), "--kpri", "x", "--kpub", "y", "-o", &f.p("b.png")])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["backend"], "toy:analytic");
    // A flag beats the environment.
    let o = bin()
        .env("STEGANO_BACKEND", "toy:bogus")
        .args(["--config", &cfg, "hide", &f.p("secret.png"), "--kpri", "x", "--kpub", "y", "-o", &f.p("c.png")])
        .args(["--backend", "toy:zero"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["backend"], "toy:zero");
    // The key in the config file is picked up.
    assert_eq!(code(&run(&["--config", &cfg, "verify", &f.p("b.png")])), 0);

    std::fs::write(f.path("bad.conf"), "colour = blue\n").unwrap();
    assert_eq!(code(&run(&["--config", &f.p("bad.conf"), "keygen"])), 1);
}

#[test]
fn schedule_flags_are_reported() {
    let f = Fixture::new();
    let h = f.hide("s.png", &["--key", &f.p("k.key"), "--steps", "200", "--sub-steps", "20"]);
    assert_eq!(code(&h), 0);
    let s = &json(&h)["schedule"];
    assert_eq!(s["steps"], 200);
    assert_eq!(s["sub_steps"], 20);
    assert_eq!(code(&f.hide("t.png", &["--key", &f.p("k.key"), "--sub-steps", "0"])), 1);
}

#[test]
fn session_ledger_counts_one_key_exchange() {
    let f = Fixture::new();
    let k_pubs = [
        "a flower",
        "Leaning Tower of Pisa under the blue sky",
        "a tiger by the window",
        "an apple on the grass",
        "a dog in the snow",
        "a lion in the sky",
        "an apple on the grass",
        "a white lighthouse on a calm sea",
        "a motorcycle on the road",
        "a bus on the grassland",
    ];
    let ledger = f.p("ledger.json");
    let mut last = Value::Null;
    for (i, kpub) in k_pubs.iter().enumerate() {
        let o = bin()
            .args(["hide", &f.p("secret.png"), "--kpri", "k", "--kpub", kpub])
            .args(["-o", &f.p(&format!("s{i}.png")), "--key", &f.p("k.key"), "--ledger", &ledger])
            .args(["--backend", "toy:zero", "--steps", "10", "--sub-steps", "2"])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        last = json(&o)["ledger"].clone();
    }
    assert_eq!(last["sessions"], 10);
    assert_eq!(last["key_exchange_bits"], 102);
    assert_eq!(last["pseudo_key_baseline_bits"], 3568);
}

fn counting_oracle(g: &PixelGrid) -> usize {
    let mut zeros = 0;
    for br in (0..g.height() / 3).map(|b| 3 * b) {
        for bc in (0..g.width() / 3).map(|b| 3 * b) {
            let center = g.get(br + 1, bc + 1);
            for (dr, dc) in [(0, 0), (0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1), (2, 2)] {
                zeros += (g.get(br + dr, bc + dc) == center) as usize;
            }
        }
    }
    zeros
}

#[test]
fn capacity_matches_counting_oracle() {
    let f = Fixture::new();
    let g = PixelGrid::from_fn(50, 40, |r, c| (100 + (r * c) % 3) as u8);
    io::save(&g, f.path("g.pgm")).unwrap();
    let zeros = counting_oracle(&g);
    for (mode, window) in [("cdjb", 5), ("sequential", 1)] {
        let o = run(&["capacity", &f.p("g.pgm"), "--mode", mode]);
        assert_eq!(code(&o), 0);
        let r = json(&o);
        assert_eq!(r["eligible_zero"], zeros);
        assert_eq!(r["payload_bits"], zeros / window);
    }
}

#[test]
fn histogram_outputs() {
    let f = Fixture::new();
    let g = PixelGrid::from_fn(9, 6, |r, c| (50 + r + c) as u8);
    io::save(&g, f.path("g.png")).unwrap();
    let o = run(&["histogram", &f.p("g.png")]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["total"], 6 * 8);
    let sum: u64 = r["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(sum, 48);
    let csv = run(&["histogram", &f.p("g.png"), "--csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("value,count\n"));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 2));
}

#[test]
fn rgb_accepted_only_where_documented() {
    let f = Fixture::new();
    let path = f.path("rgb.ppm");
    write_rgb(&path, 12, 9);
    assert_eq!(code(&run(&["capacity", &f.p("rgb.ppm")])), 0);
    let h = run(&["histogram", &f.p("rgb.ppm")]);
    assert_eq!(json(&h)["planes"], 3);
    assert_eq!(code(&run(&["verify", &f.p("rgb.ppm"), "--scheme", "without-key"])), 1);
}

fn write_rgb(path: &Path, w: u32, h: u32) {
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h * 3).map(|i| (i % 7) as u8 * 30));
    std::fs::write(path, bytes).unwrap();
}
