use nls_dpg::manufactured::CaseName;
use nls_dpg::mesh::TensorMesh;
use nls_dpg::model::Regime;
use nls_dpg::study::{self, read_rows, RunConfig};
use nls_dpg::DpgError;

fn small(regime: Regime, case: CaseName, p: usize) -> RunConfig {
    let mut c = RunConfig::new(regime, case, p);
    c.initial_n = 2;
    c.refinements = 2;
    c
}

fn table(config: &RunConfig) -> Vec<u8> {
    let st = study::run_convergence(config).unwrap();
    assert!(st.failure.is_none());
    let mut buf = Vec::new();
    study::write_rows(&st.rows, &mut buf).unwrap();
    buf
}

#[test]
fn convergence_table_is_deterministic() {
    for regime in [Regime::Hyperbolic, Regime::Elliptic] {
        let config = small(regime, CaseName::Soliton1, 1);
        let a = table(&config);
        let b = table(&config);
        assert_eq!(a, b, "{regime:?}");
        assert!(a.starts_with(b"sqrt_n,rel_L2_error,res,extslp\n"));
        let rows = read_rows(&a[..]).unwrap();
        assert_eq!(rows.iter().map(|r| r.sqrt_n).collect::<Vec<_>>(), [2.0, 4.0, 8.0]);
        // The reference slope passes through the last point.
        let last = rows.last().unwrap();
        assert!((last.extslp - last.rel_l2_error).abs() <= 1e-15 * last.rel_l2_error);
    }
}

fn parse_raster(buf: &[u8]) -> Vec<[f64; 4]> {
    let mut r = csv::Reader::from_reader(buf);
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["tau", "xi", "re", "im"]);
    r.deserialize().map(|row| row.unwrap()).collect()
}

#[test]
fn exact_raster_layout() {
    let config = RunConfig::new(Regime::Hyperbolic, CaseName::Soliton1, 1);
    let case = config.case_data().unwrap();
    let mut buf = Vec::new();
    study::dump_exact(&case, &TensorMesh::unit_square(4).unwrap(), 101, &mut buf).unwrap();
    let rows = parse_raster(&buf);
    assert_eq!(rows.len(), 101 * 101);
    // τ varies fastest.
    assert_eq!(rows[1][0], 0.01);
    assert_eq!(rows[1][1], 0.0);
    let centre = rows[50];
    assert_eq!((centre[0], centre[1]), (0.5, 0.0));
    assert!((centre[2] - 1.0).abs() < 1e-12 && centre[3].abs() < 1e-12);
}

#[test]
fn solved_raster_tracks_the_exact_field() {
    let config = RunConfig::new(Regime::Hyperbolic, CaseName::Soliton1, 2);
    let case = config.case_data().unwrap();
    let mesh = TensorMesh::unit_square(8).unwrap();
    let (sys, sol) = study::solve_case(&mesh, &case, config.spaces().unwrap(), config.solver).unwrap();
    let rel = sys.errors(&sol, config.norm).rel_l2;
    let (mut got, mut want) = (Vec::new(), Vec::new());
    study::dump_field(&sys, &sol, 41, &mut got).unwrap();
    study::dump_exact(&case, &mesh, 41, &mut want).unwrap();
    let (got, want) = (parse_raster(&got), parse_raster(&want));
    let mut d2 = 0.0;
    let mut u2 = 0.0;
    for (g, w) in got.iter().zip(&want) {
        assert_eq!((g[0], g[1]), (w[0], w[1]));
        d2 += (g[2] - w[2]).powi(2);
        u2 += w[2].powi(2);
    }
    let raster_rel = (d2 / u2).sqrt();
    assert!(raster_rel <= 5.0 * rel, "raster {raster_rel:e} vs L2 {rel:e}");
}

#[test]
fn scaling_runs_share_the_mesh_sequence() {
    let mut config = small(Regime::Elliptic, CaseName::Soliton1, 1);
    config.refinements = 1;
    config.c_values = vec![1.0, 1e4];
    config.lanczos_steps = 10;
    let runs = study::run_cstudy(&config).unwrap();
    assert_eq!(runs.len(), 2);
    let s0: Vec<f64> = runs[0].study.rows.iter().map(|r| r.sqrt_n).collect();
    for r in &runs {
        assert_eq!(r.study.rows.iter().map(|r| r.sqrt_n).collect::<Vec<_>>(), s0);
        let cond = r.condition.expect("condition estimate");
        assert!(cond.ratio() >= 1.0);
    }
}

#[test]
fn configuration_errors() {
    let err = RunConfig::from_json(r#"{"regime":"hyperbolic","case":"soliton1","p":1,"colour":3}"#).unwrap_err();
    assert!(matches!(err, DpgError::Config(_)), "{err}");
    assert!(err.is_validation());
    let err = RunConfig::from_json(r#"{"regime":"hyperbolic","case":"soliton1","p":0}"#).unwrap_err();
    assert!(err.is_validation(), "{err}");
    let ok = RunConfig::from_json(r#"{"regime":"elliptic","case":"soliton2","p":2,"c":100}"#).unwrap();
    assert_eq!((ok.delta_p, ok.c, ok.initial_n), (2, 100.0, 4));
    let hyper = small(Regime::Hyperbolic, CaseName::Soliton1, 1);
    let err = study::run_cstudy(&hyper).unwrap_err();
    assert!(matches!(err, DpgError::WrongRegime { .. }) && err.is_validation());
    assert!(study::run_adaptive(&hyper).unwrap_err().is_validation());
}
