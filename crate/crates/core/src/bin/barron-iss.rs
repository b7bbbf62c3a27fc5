fn main() {
    std::process::exit(barron_iss::cli::run_from_args(std::env::args_os()));
}
