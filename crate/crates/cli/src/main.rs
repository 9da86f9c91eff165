use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = mmrisk_cli::run(
        std::env::args_os(),
        std::env::var_os(mmrisk_cli::WORKERS_ENV),
        &mut stdout.lock(),
        &mut stderr.lock(),
    );
    let _ = std::io::stdout().flush();
    std::process::exit(code);
}
