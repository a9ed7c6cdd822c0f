fn main() {
    let args: Vec<String> = std::env::args().collect();
    let env_seed = std::env::var("PTA_SEED").ok();
    match pta_cli::app::run(&args, env_seed.as_deref()) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
