use std::process::ExitCode;

fn main() -> ExitCode {
    match towerlab_cli::app::run_from(std::env::args_os()) {
        Ok(report) if report.passed() => ExitCode::SUCCESS,
        Ok(report) => {
            eprintln!("failed checks: {}", report.failures().join(", "));
            ExitCode::from(1)
        }
        Err(e) => match e.downcast_ref::<clap::Error>() {
            Some(ce) => ce.exit(),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}
