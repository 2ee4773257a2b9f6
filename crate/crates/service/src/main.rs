fn main() {
    std::process::exit(geoctl::cli::main_with_args(std::env::args_os()));
}
