fn main() {
    std::process::exit(qbattery::cli::run_from(std::env::args_os()));
}
