fn main() {
    std::process::exit(rppg_core::cli::run(std::env::args_os()));
}
