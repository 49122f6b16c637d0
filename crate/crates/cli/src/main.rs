use clap::Parser;

fn main() {
    let cli = qcbm_cli::Cli::parse();
    if let Err(e) = qcbm_cli::run(cli) {
        eprintln!("error: {e:#}");
        let config_error = matches!(e.downcast_ref::<qcbm::QcbmError>(), Some(qcbm::QcbmError::Config { .. }));
        std::process::exit(if config_error { 2 } else { 1 });
    }
}
