#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_height_path0_empty_tree(void)
{
    TEST_ASSERT_EQUAL_INT(0, height(NULL));
}
