/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulation_free: (a: number, b: number) => void;
export const check_config: (a: number, b: number) => [number, number];
export const preset_objective: (a: number, b: number) => [number, number, number, number];
export const simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const simulation_hamming: (a: number) => number;
export const simulation_mse: (a: number) => number;
export const simulation_print_pixels: (a: number) => [number, number];
export const simulation_side: (a: number) => number;
export const simulation_ssim: (a: number) => number;
export const simulation_template_pixels: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
