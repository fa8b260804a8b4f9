fn main() {
    std::process::exit(modcomp::cli_main(std::env::args_os()));
}
