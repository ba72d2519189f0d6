fn main() {
    env_logger::init();
    std::process::exit(geoseg_cli::run(std::env::args_os()));
}
