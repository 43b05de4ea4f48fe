fn main() {
    std::process::exit(frost_brdf_cli::dispatch(std::env::args_os()));
}
