fn main() {
    std::process::exit(nhext_cli::main_with_args(std::env::args_os()));
}
