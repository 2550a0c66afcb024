# Point cloud sizes
NUM_POINTS = 2048
LATENT_DIM = 96
EMD_ORACLE_LIMIT = 512

# Slice images
IMAGE_HEIGHT = 91
IMAGE_WIDTH = 109
MAX_SLICES = 7
VALID_SLICE_COUNTS = (1, 3, 5, 7)
SLAB_THICKNESS_RATIO = 0.05

# Loss weights
LAMBDA_KL = 0.1
LAMBDA_CD_START = 0.1
LAMBDA_CD_END = 1.0
LAMBDA_CD_COMPLETION = 1.0
LAMBDA_EMD = 0.05
LAMBDA_GP = 10.0
LEARNING_RATE = 1e-4
N_CRITIC = 5

# Branching generator
BRANCHING_DEGREES = (2, 2, 2, 2, 2, 64)
BRANCHING_WIDTHS = (96, 256, 256, 256, 128, 128, 3)
SUPPORT = 10
LEAKY_SLOPE = 0.2

# Hierarchical encoder levels: (npoint, radius, kmax, mlp widths)
ENCODER_LEVELS = ((512, 0.2, 32, (64, 64, 128)),
                  (128, 0.4, 64, (128, 128, 256)))
GLOBAL_MLP = (256, 512, 512)

# Occlusion
OCCLUSION_MODES = ('half-space', 'sphere-cut', 'rect-mask')
MIN_OCCLUSION = 0.2
MAX_OCCLUSION = 0.4
OCCLUSION_TOLERANCE = 0.05

# Dataset container
SAMPLE_FORMAT = 'hspn-sample'
SAMPLE_VERSION = 1
CHECKPOINT_FORMAT = 'hspn-checkpoint'
CHECKPOINT_VERSION = 1
MANIFEST_NAME = 'manifest.jsonl'
SAMPLES_DIR = 'samples'
TRAIN_FRACTION = 0.9

# Reporting
CD_REPORT_SCALE = 10.0
FLOAT_FORMAT = '%.6f'
HEATMAP_SCALE = 1e-4

# Published reference values, CD x 1e-1, displayed as annotations only
REFERENCE_CD = {'full': 4.461,
                'no_d': 5.309,
                'pointoutnet_like': 5.492,
                'fc_decoder': 10.572,
                'foldingnet_like': 9.863,
                'topnet_like': 6.255,
                'no_agb_all': 4.958,
                'no_agb_pipeline': 4.831,
                'no_agb_self': 5.178}
REFERENCE_AGB_GRID = {'no_agb_all': (5.258, 5.071, 4.958),
                      'no_agb_pipeline': (5.160, 4.952, 4.831),
                      'no_agb_self': (5.314, 5.186, 5.178),
                      'full': (4.741, 4.406, 4.461)}
REFERENCE_POINTS = {2048: 4.461, 1024: 4.655, 512: 4.836, 256: 5.178}
REFERENCE_SLICES = {1: 4.461, 3: 4.327, 5: 4.285, 7: 4.369}
