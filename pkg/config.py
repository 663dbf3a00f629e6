import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Config:
    """Base configuration class"""
    WORKERS = int(os.environ.get('QD_WORKERS', 1))
    OUT_DIR = os.environ.get('QD_OUT_DIR', os.path.join('runs', 'latest'))
    LOG_LEVEL = os.environ.get('QD_LOG_LEVEL', 'INFO')
    CVT_SAMPLES = int(os.environ.get('QD_CVT_SAMPLES', 100_000))
    CVT_ITERS = int(os.environ.get('QD_CVT_ITERS', 50))
    CVT_TOLERANCE = 1e-6
    PROGRESS_EVERY = int(os.environ.get('QD_PROGRESS_EVERY', 10))

class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('QD_LOG_LEVEL', 'DEBUG')

class ProductionConfig(Config):
    """Production configuration"""
    # Use every core unless told otherwise
    WORKERS = int(os.environ.get('QD_WORKERS', os.cpu_count() or 1))

class TestingConfig(Config):
    """Testing configuration"""
    WORKERS = 1
    OUT_DIR = 'test_runs'
    CVT_SAMPLES = 10_000
    CVT_ITERS = 20

# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}

def get_config(config_name=None):
    """Return the settings class selected by name or by QD_CONFIG"""
    name = config_name or os.environ.get('QD_CONFIG', 'default')
    return config.get(name, config['default'])
