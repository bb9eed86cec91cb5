fn main() {
    std::process::exit(nmqfi_experiments::cli::run(std::env::args_os()));
}
