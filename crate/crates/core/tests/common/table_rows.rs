/// (count, chiplets, O-D-K, I-P-M, protocol column)
const ROWS: [(usize, &str, &str, &str, &str); 48] = [
    (1, "96-7-512", "1-OS-1", "2D-NA-DDR5", "---"),
    (1, "64-7-512", "1-IS-1", "2D-NA-DDR5", "---"),
    (2, "96-7-1024, 64-10-768", "0-OS-1", "3D-HB-HBM3", "UC3"),
    (1, "64-7-1024", "0-IS-1", "2D-NA-DDR5", "---"),
    (2, "96-7-512, 64-7-768", "0-OS-1", "3D-HB-HBM3", "UC3"),
    (5, "64-7-256 x5", "1-IS-1", "3D-HB-HBM3", "UC3"),
    (5, "64-7-256 x5", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (5, "64-7-256 x5", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (1, "128-7-2048", "0-WS-0", "2D-NA-DDR5", "---"),
    (1, "96-7-1024", "0-IS-1", "2D-NA-DDR5", "---"),
    (6, "64-7-256 x5, 96-7-512", "1-OS-0", "3D-HB-HBM3", "UC3"),
    (1, "96-7-512", "0-WS-1", "2D-NA-DDR5", "---"),
    (5, "64-7-256 x3, 96-7-512 x2", "1-OS-0", "3D-HB-HBM3", "UC3"),
    (4, "96-7-512, 64-7-256 x3", "1-OS-0", "3D-HB-HBM3", "UC3"),
    (2, "64-7-512, 64-7-256", "1-OS-1", "3D-HB-HBM3", "UC3"),
    (6, "64-7-256 x6", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (6, "128-7-1024 x4, 64-7-256 x2", "1-OS-0", "2.5D+3D-HB/RDL-HBM3", "UC3/S"),
    (6, "96-7-512 x6", "0-WS-1", "3D-HB-HBM3", "UC3"),
    (2, "64-7-512, 96-7-1536", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (1, "128-7-1024", "0-IS-1", "2D-NA-DDR5", "---"),
    (6, "96-7-512 x6", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (1, "128-7-1024", "1-IS-1", "2D-NA-DDR5", "---"),
    (5, "96-7-512 x5", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (6, "96-7-512 x6", "0-WS-1", "3D-HB-HBM3", "UC3"),
    (2, "128-7-1024 x2", "1-OS-0", "2.5D-RDL-HBM3", "UCS"),
    (2, "128-7-1024 x2", "1-IS-0", "2.5D-RDL-DDR5", "UCS"),
    (2, "96-7-512, 64-7-256", "1-IS-0", "2.5D-EMIB-HBM3", "UCA"),
    (4, "96-7-256 x4", "1-IS-1", "3D-HB-HBM2", "UC3"),
    (5, "96-7-512 x4, 64-7-256", "1-OS-0", "3D-HB-HBM3", "UC3"),
    (6, "64-7-256 x6", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (5, "64-7-256 x5", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (6, "64-7-256 x6", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (4, "64-7-256 x4", "0-OS-0", "2.5D+3D-HB/RDL-HBM3", "UC3/S"),
    (4, "64-7-256 x4", "1-IS-1", "3D-HB-HBM3", "UC3"),
    (5, "64-7-256 x5", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (4, "64-7-256 x4", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (4, "64-7-256 x4", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (4, "64-7-256 x4", "1-IS-1", "3D-HB-HBM3", "UC3"),
    (4, "64-7-256 x4", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (4, "64-7-256 x4", "0-IS-1", "3D-HB-HBM3", "UC3"),
    (3, "64-7-256 x3", "1-OS-0", "2.5D+3D-HB/RDL-HBM3", "UC3/S"),
    (2, "64-7-256 x2", "0-WS-0", "2.5D-RDL-HBM3", "UCS"),
    (2, "64-7-256, 64-7-512", "0-OS-0", "2.5D-RDL-HBM3", "UCS"),
    (2, "64-7-256 x2", "0-WS-0", "3D-HB-HBM3", "UC3"),
    (2, "64-7-512, 64-7-1024", "1-WS-0", "3D-µB-HBM3", "UC3"),
    (2, "64-7-256 x2", "1-WS-0", "3D-HB-HBM3", "UC3"),
    (2, "64-7-256 x2", "0-OS-0", "3D-HB-HBM3", "UC3"),
    (2, "64-7-256 x2", "0-WS-0", "3D-HB-HBM3", "UC3"),
];
