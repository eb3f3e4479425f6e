fn main() {
    std::process::exit(rgd_cli::run(std::env::args_os()));
}
