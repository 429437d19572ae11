fn main() {
    std::process::exit(patchdyn::cli::run(std::env::args_os()));
}
