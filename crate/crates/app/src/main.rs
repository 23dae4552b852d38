fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LVDISC_LOG", "warn")).init();
    std::process::exit(lvdisc_app::run(std::env::args_os()));
}
