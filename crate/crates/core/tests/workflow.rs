use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use spinlake::config::{Checkpoint, RunConfig};
use spinlake::sampler::{acceptance_probability, proposal_kernel};
use spinlake::workflow::{self, Context};
use spinlake::{AnsatzHyper, Configuration, LatticeSpec, C64};

const SMALL: &str = r#"
seed = 3

[lattice]
l1 = 2
l2 = 2
boundary = "periodic"

[hamiltonian]
delta = 1.0

[ansatz]
layers = 1
features = 2

[sampler]
n_chains = 2
n_samples = 32
burn_in = 20
thin = 2

[tdvp]
dt = 0.05

[ramp]
initial_a = 3.0
checkpoint_every = 3
path_points = 2
path_fraction = 0.5

[ramp.protocol]
kind = "linear_rate"
omega = 1.0
delta_start = -1.0
delta_final = 1.0
rate = 8.0
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spinlake-wf-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn context(out: &PathBuf) -> Context {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.output = out.clone();
    Context::new(cfg).unwrap()
}

#[test]
fn env_override_replaces_nested_key() {
    let vars = vec![
        ("SPINLAKE_HAMILTONIAN__DELTA".to_string(), "2.5".to_string()),
        ("SPINLAKE_SAMPLER__N_CHAINS".to_string(), "7".to_string()),
        ("UNRELATED".to_string(), "x".to_string()),
    ];
    let cfg = RunConfig::from_toml_with_env(SMALL, vars).unwrap();
    assert_eq!(cfg.hamiltonian.delta, 2.5);
    assert_eq!(cfg.sampler.n_chains, 7);
}

#[test]
fn hash_ignores_output_dir_only() {
    let a = RunConfig::from_toml(SMALL).unwrap();
    let mut b = a.clone();
    b.output = PathBuf::from("/elsewhere");
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn unknown_keys_rejected() {
    let text = format!("{SMALL}\nbogus = 1\n");
    assert!(RunConfig::from_toml(&text).is_err());
}

#[test]
fn config_toml_roundtrip() {
    let a = RunConfig::from_toml(SMALL).unwrap();
    let text = toml::to_string(&a).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), a);
}

#[test]
fn checkpoint_rejects_corruption() {
    let ck = Checkpoint {
        lattice_hash: [7; 32],
        config_hash: "abc".into(),
        hyper: AnsatzHyper::default(),
        t: 0.25,
        step: 5,
        params: vec![C64::new(1.0, -2.0), C64::new(0.5, 0.0)],
        chains: vec![Configuration::vacuum(4)],
    };
    let bytes = ck.to_bytes();
    assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
}

#[test]
fn ramp_is_deterministic_and_resumes_bit_identically() {
    let a = scratch("a");
    let b = scratch("b");
    let c = scratch("c");
    let first = workflow::run_ramp(&context(&a), None).unwrap();
    workflow::run_ramp(&context(&b), None).unwrap();
    assert_eq!(first.steps, 5);
    assert_eq!(fs::read(a.join("final.ckpt")).unwrap(), fs::read(b.join("final.ckpt")).unwrap());
    assert_eq!(fs::read(a.join("measurements.csv")).unwrap(), fs::read(b.join("measurements.csv")).unwrap());

    // latest.ckpt holds step 3 of 5
    fs::create_dir_all(&c).unwrap();
    let mid = c.join("mid.ckpt");
    fs::copy(a.join("latest.ckpt"), &mid).unwrap();
    assert_eq!(Checkpoint::read(&mid).unwrap().step, 3);
    workflow::run_ramp(&context(&c), Some(&mid)).unwrap();
    assert_eq!(fs::read(a.join("final.ckpt")).unwrap(), fs::read(c.join("final.ckpt")).unwrap());

    let csv = fs::read_to_string(a.join("measurements.csv")).unwrap();
    assert!(csv.contains(&context(&a).hash));
    for d in [a, b, c] {
        let _ = fs::remove_dir_all(d);
    }
}

#[test]
fn resume_under_other_config_fails() {
    let a = scratch("other-a");
    workflow::run_ramp(&context(&a), None).unwrap();
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.seed = 99;
    cfg.output = scratch("other-b");
    let ctx = Context::new(cfg).unwrap();
    assert!(workflow::run_ramp(&ctx, Some(&a.join("latest.ckpt"))).is_err());
    let _ = fs::remove_dir_all(a);
}

fn arb_config(n_triangles: usize) -> impl Strategy<Value = Configuration> {
    proptest::collection::vec(0u8..4, n_triangles).prop_map(|s| Configuration::from_states(s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plaquette_flip_is_involution(c in arb_config(24), p in 0usize..8) {
        let lat = LatticeSpec::periodic(2, 2).build().unwrap();
        let p = p % lat.hexagons.len();
        let mut d = c.clone();
        lat.flip_plaquette(&mut d, p);
        let charges_before = lat.parity_charges(&c);
        let charges_after = lat.parity_charges(&d);
        prop_assert_eq!(charges_before, charges_after);
        lat.flip_plaquette(&mut d, p);
        prop_assert_eq!(d, c);
    }

    #[test]
    fn encode_decode_roundtrip(c in arb_config(12)) {
        let occ = c.decode();
        prop_assert_eq!(Configuration::encode(&occ).unwrap(), c.clone());
        prop_assert_eq!(Configuration::from_basis_index(c.basis_index(), 12), c.clone());
        prop_assert_eq!(Configuration::unpack(&c.pack(), 12), c);
    }

    #[test]
    fn proposal_kernel_is_normalized(c in arb_config(24), p in 0.0f64..1.0) {
        let lat = LatticeSpec::periodic(2, 2).build().unwrap();
        let total: f64 = proposal_kernel(&lat, &c, p).iter().map(|(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acceptance_ratio_satisfies_balance(x in -5.0f64..5.0, y in -5.0f64..5.0, beta in 0.1f64..2.0) {
        let forward = acceptance_probability(x, y, beta) * (2.0 * beta * x).exp();
        let backward = acceptance_probability(y, x, beta) * (2.0 * beta * y).exp();
        prop_assert!((forward - backward).abs() <= 1e-12 * forward.max(backward));
    }
}
