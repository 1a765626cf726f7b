fn main() {
    std::process::exit(conecert::cli::run(std::env::args_os()));
}
