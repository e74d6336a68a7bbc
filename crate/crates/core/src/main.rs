fn main() {
    std::process::exit(prefrank::cli::dispatch(std::env::args_os()));
}
